from types import SimpleNamespace

import numpy as np
import pytest

from planrag.policy import A_MAX, D_FEATURES, init_params, masked_log_softmax
from planrag.ppo import (
    ReplayBuffer,
    TrainConfig,
    TrajectoryStep,
    actor_loss,
    assign_rewards,
    compute_gae,
    critic_loss,
    flatten_buffer,
    loss_and_grads,
    ppo_update,
    shaped_reward,
    train,
)
from planrag.workflow import PhaseKind


def make_step(rng, n_actions=7, value=0.0, r_cp=0.0, r_fp=0):
    features = rng.normal(size=D_FEATURES)
    action = int(rng.integers(n_actions))
    log_prob = float(np.log(1.0 / n_actions))
    return TrajectoryStep(
        features=features,
        phase=PhaseKind.ROOT,
        action_index=action,
        n_actions=n_actions,
        log_prob=log_prob,
        value=value,
        r_cp=r_cp,
        r_fp=r_fp,
    )


# --------------------------------------------------------------------- GAE

def test_gae_hand_case_no_discounting():
    adv, ret = compute_gae([0.0, 1.0], [0.5, 0.5], gamma=1.0, lam=1.0)
    np.testing.assert_allclose(adv, [0.5, 0.5])
    np.testing.assert_allclose(ret, [1.0, 1.0])


def test_gae_single_step_is_td_error():
    adv, ret = compute_gae([2.0], [0.75], gamma=0.9, lam=0.5)
    assert adv[0] == pytest.approx(2.0 - 0.75)
    assert ret[0] == pytest.approx(2.0)


def test_gae_lambda_zero_is_one_step_td():
    rewards = [1.0, 2.0, 3.0]
    values = [0.1, 0.2, 0.3]
    adv, _ = compute_gae(rewards, values, gamma=0.9, lam=0.0)
    expected = [
        1.0 + 0.9 * 0.2 - 0.1,
        2.0 + 0.9 * 0.3 - 0.2,
        3.0 + 0.9 * 0.0 - 0.3,
    ]
    np.testing.assert_allclose(adv, expected)


def test_gae_input_validation():
    with pytest.raises(ValueError):
        compute_gae([1.0], [1.0, 2.0], 1.0, 1.0)
    with pytest.raises(ValueError):
        compute_gae([], [], 1.0, 1.0)


# ------------------------------------------------------------------ losses

def test_actor_loss_clip_arithmetic():
    # ratio 1.5 clipped to 1.2 on a positive advantage
    loss = actor_loss(
        np.array([np.log(1.5)]), np.array([0.0]), np.array([1.0]), epsilon=0.2
    )
    assert loss == pytest.approx(-1.2)
    # ratio 0.5 clipped to 0.8 on a negative advantage
    loss = actor_loss(
        np.array([np.log(0.5)]), np.array([0.0]), np.array([-1.0]), epsilon=0.2
    )
    assert loss == pytest.approx(0.8)
    # inside the trust region the raw ratio passes through
    loss = actor_loss(
        np.array([np.log(1.1)]), np.array([0.0]), np.array([2.0]), epsilon=0.2
    )
    assert loss == pytest.approx(-2.2)


def test_critic_loss_takes_the_worse_branch():
    # raw error 2 (squared 4), clipped prediction 0.2 gives error 1.8
    # (squared 3.24): the max picks 4
    loss = critic_loss(
        np.array([2.0]), np.array([0.0]), np.array([0.0]), epsilon=0.2
    )
    assert loss == pytest.approx(4.0)
    # clipping can only make the loss larger, never smaller
    loss = critic_loss(
        np.array([0.05]), np.array([0.0]), np.array([1.0]), epsilon=0.2
    )
    assert loss == pytest.approx((0.05 - 1.0) ** 2)


# ----------------------------------------------------------------- rewards

def test_assign_rewards_shares_f1_across_steps():
    rng = np.random.default_rng(0)
    steps = [make_step(rng, r_cp=0.5), make_step(rng, r_cp=1.0, r_fp=1)]
    assign_rewards(steps, f1=0.8, alpha=0.2)
    assert steps[0].total_reward == pytest.approx(0.8 - 0.2 * 0.5)
    assert steps[1].total_reward == pytest.approx(0.8 - 0.2 * 1.0 - 1.0)


def test_shaped_reward_subtracts_kl_term():
    assert shaped_reward(1.0, np.log(0.5), np.log(0.25), beta=0.1) == pytest.approx(
        1.0 - 0.1 * np.log(2.0)
    )
    assert shaped_reward(1.0, -1.0, -1.0, beta=5.0) == 1.0


# ------------------------------------------------------------------ buffer

def test_replay_buffer_counts_and_rejects_empty():
    buf = ReplayBuffer()
    rng = np.random.default_rng(0)
    buf.add([make_step(rng)])
    buf.add([make_step(rng), make_step(rng)])
    assert len(buf) == 2
    assert buf.n_steps == 3
    with pytest.raises(ValueError):
        buf.add([])
    buf.clear()
    assert len(buf) == 0


def test_flatten_requires_assigned_rewards():
    buf = ReplayBuffer()
    rng = np.random.default_rng(0)
    buf.add([make_step(rng)])
    with pytest.raises(ValueError):
        flatten_buffer(buf, init_params(), TrainConfig())


def test_flatten_normalizes_advantages():
    buf = ReplayBuffer()
    rng = np.random.default_rng(1)
    for _ in range(4):
        steps = [make_step(rng, value=0.3), make_step(rng, value=-0.2)]
        assign_rewards(steps, f1=float(rng.random()), alpha=0.0)
        buf.add(steps)
    batch = flatten_buffer(buf, init_params(), TrainConfig(advantage_norm=True))
    assert batch.advantages.mean() == pytest.approx(0.0, abs=1e-9)
    assert batch.advantages.std() == pytest.approx(1.0, abs=1e-6)
    raw = flatten_buffer(buf, init_params(), TrainConfig(advantage_norm=False))
    assert raw.advantages.std() != pytest.approx(1.0, abs=1e-6)


# --------------------------------------------------------------- gradients

def _random_batch(seed, n_rollouts=6, steps_per=3):
    rng = np.random.default_rng(seed)
    buf = ReplayBuffer()
    for _ in range(n_rollouts):
        steps = [
            make_step(rng, n_actions=int(rng.integers(1, A_MAX + 1)), value=float(rng.normal()))
            for _ in range(steps_per)
        ]
        assign_rewards(steps, f1=float(rng.random()), alpha=0.3)
        buf.add(steps)
    return flatten_buffer(buf, init_params(), TrainConfig())


def test_analytic_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    actor = rng.normal(scale=0.3, size=(D_FEATURES, A_MAX))
    critic = rng.normal(scale=0.3, size=D_FEATURES)
    batch = _random_batch(seed=9)
    _, _, grad_a, grad_c = loss_and_grads(actor, critic, batch, epsilon=0.2)

    h = 1e-6
    for idx in [(0, 0), (3, 2), (14, 6), (9, 4)]:
        bump = np.zeros_like(actor)
        bump[idx] = h
        lp, _, _, _ = loss_and_grads(actor + bump, critic, batch, 0.2)
        lm, _, _, _ = loss_and_grads(actor - bump, critic, batch, 0.2)
        fd = (lp - lm) / (2 * h)
        assert grad_a[idx] == pytest.approx(fd, abs=1e-5)
    for j in [0, 7, 14]:
        bump = np.zeros_like(critic)
        bump[j] = h
        _, cp_, _, _ = loss_and_grads(actor, critic + bump, batch, 0.2)
        _, cm_, _, _ = loss_and_grads(actor, critic - bump, batch, 0.2)
        fd = (cp_ - cm_) / (2 * h)
        assert grad_c[j] == pytest.approx(fd, abs=1e-5)


# ------------------------------------------------------------------ update

def test_ppo_update_moves_params_and_clears_buffer():
    rng = np.random.default_rng(2)
    buf = ReplayBuffer()
    for _ in range(5):
        steps = [make_step(rng, value=0.1) for _ in range(2)]
        assign_rewards(steps, f1=float(rng.random()), alpha=0.0)
        buf.add(steps)
    params = init_params()
    new, stats = ppo_update(buf, params, TrainConfig(learning_rate=0.1))
    assert len(buf) == 0
    assert not np.array_equal(new.actor, params.actor)
    np.testing.assert_array_equal(new.frozen_actor, params.frozen_actor)
    for key in ("actor_loss", "critic_loss", "kl_to_init", "entropy", "n_rollouts", "n_steps"):
        assert key in stats
    assert stats["n_rollouts"] == 5
    assert stats["n_steps"] == 10


def test_ppo_update_rejects_empty_buffer():
    with pytest.raises(ValueError):
        ppo_update(ReplayBuffer(), init_params(), TrainConfig())


# ------------------------------------------------------------------- train

class _OneStepEnv:
    """Contextual bandit: reward 1 for the per-record lucky action, else 0."""

    def __init__(self, n_actions=3):
        self.n_actions = n_actions

    def __call__(self, record, params, rng):
        features = np.zeros(D_FEATURES)
        features[14] = 1.0
        log_probs = masked_log_softmax(params.actor, features, self.n_actions)
        action = int(rng.choice(self.n_actions, p=np.exp(log_probs)))
        f1 = 1.0 if action == record["lucky"] else 0.0
        step = TrajectoryStep(
            features=features,
            phase=PhaseKind.ROOT,
            action_index=action,
            n_actions=self.n_actions,
            log_prob=float(log_probs[action]),
            value=float(params.critic @ features),
            r_cp=0.0,
            r_fp=0,
        )
        return SimpleNamespace(trajectory=[step], f1=f1)


def test_train_improves_a_bandit_and_logs_history(tmp_path):
    dataset = [{"lucky": 2}]
    env = _OneStepEnv(n_actions=3)
    config = TrainConfig(
        n_batches=30, batch_size=16, learning_rate=0.5, seed=0, advantage_norm=True
    )
    log = tmp_path / "history.jsonl"
    params, history = train(env, dataset, init_params(), config, log_path=log)
    assert len(history) == 30
    assert history[-1]["mean_f1"] > history[0]["mean_f1"] - 1e-9
    features = np.zeros(D_FEATURES)
    features[14] = 1.0
    probs = np.exp(masked_log_softmax(params.actor, features, 3))
    assert probs[2] > 0.8
    lines = log.read_text().strip().splitlines()
    assert len(lines) == 30
    assert "mean_total_reward" in lines[-1]


def test_train_validates_inputs():
    env = _OneStepEnv()
    with pytest.raises(ValueError):
        train(env, [], init_params(), TrainConfig())
    with pytest.raises(ValueError):
        train(env, [{"lucky": 0}], init_params(), TrainConfig(n_batches=-1))
