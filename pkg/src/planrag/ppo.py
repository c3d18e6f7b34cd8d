"""Clipped-surrogate policy optimization for the compact planner.

One trajectory step per planner invocation. The rollout's final F1 is shared
by every step of that rollout; each step additionally pays its own cost and
format penalties, and the terminal shaping subtracts a KL-ish anchor term,
beta * (log pi_behavior(a) - log pi_init(a)), computed once per update at
batch entry and treated as a constant afterwards. Advantages come from GAE
over the rollout's steps in commit order with a zero terminal bootstrap,
using the behavior-time value estimates.

Gradients are analytic (the policy is linear-softmax, the critic linear), so
they can be checked against central finite differences exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .policy import PolicyParams, masked_log_softmax
from .reward import total_reward
from .workflow import PhaseKind

logger = logging.getLogger(__name__)


@dataclass
class TrajectoryStep:
    features: np.ndarray
    phase: PhaseKind
    action_index: int
    n_actions: int
    log_prob: float  # behavior policy log-prob of the chosen action
    value: float  # behavior critic estimate
    r_cp: float
    r_fp: int
    total_reward: float | None = None  # set once the rollout's F1 is known


@dataclass
class ReplayBuffer:
    rollouts: list[list[TrajectoryStep]] = field(default_factory=list)

    def add(self, rollout: list[TrajectoryStep]) -> None:
        if not rollout:
            raise ValueError("cannot buffer an empty rollout")
        self.rollouts.append(rollout)

    def clear(self) -> None:
        self.rollouts.clear()

    @property
    def n_steps(self) -> int:
        return sum(len(r) for r in self.rollouts)

    def __len__(self) -> int:
        return len(self.rollouts)


@dataclass
class TrainConfig:
    alpha: float = 0.0
    gamma: float = 1.0
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    kl_beta: float = 0.01
    learning_rate: float = 0.3
    batch_size: int = 40
    epochs_per_batch: int = 1
    n_batches: int = 50
    seed: int = 0
    max_turn: int = 6
    advantage_norm: bool = True
    turn_cost_mode: str = "prose"


def assign_rewards(rollout: Sequence[TrajectoryStep], f1: float, alpha: float) -> None:
    """Write each step's scalar reward: shared F1 minus its own penalties."""
    for step in rollout:
        step.total_reward = total_reward(f1, step.r_cp, step.r_fp, alpha)


def shaped_reward(total: float, log_prob_current: float, log_prob_init: float, beta: float) -> float:
    return total - beta * (log_prob_current - log_prob_init)


def compute_gae(
    rewards: Sequence[float],
    values: Sequence[float],
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets (terminal V = 0)."""
    if len(rewards) != len(values):
        raise ValueError("rewards and values must have equal length")
    if not rewards:
        raise ValueError("need at least one step")
    n = len(rewards)
    advantages = np.zeros(n)
    running = 0.0
    next_value = 0.0
    for t in reversed(range(n)):
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        advantages[t] = running
        next_value = values[t]
    returns = advantages + np.asarray(values, dtype=np.float64)
    return advantages, returns


def actor_loss(
    new_log_probs: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    epsilon: float,
) -> float:
    """Negated mean clipped surrogate."""
    ratio = np.exp(new_log_probs - old_log_probs)
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon)
    return float(-np.mean(np.minimum(ratio * advantages, clipped * advantages)))


def critic_loss(
    new_values: np.ndarray,
    old_values: np.ndarray,
    targets: np.ndarray,
    epsilon: float,
) -> float:
    """Mean clipped value loss: the worse of raw and clipped squared error."""
    raw = (new_values - targets) ** 2
    clipped_v = np.clip(new_values, old_values - epsilon, old_values + epsilon)
    return float(np.mean(np.maximum(raw, (clipped_v - targets) ** 2)))


@dataclass
class _FlatBatch:
    features: np.ndarray  # (n, D)
    action_index: np.ndarray  # (n,) int
    n_actions: np.ndarray  # (n,) int
    old_log_probs: np.ndarray  # (n,)
    old_values: np.ndarray  # (n,)
    advantages: np.ndarray  # (n,)
    targets: np.ndarray  # (n,)


def flatten_buffer(buffer: ReplayBuffer, params: PolicyParams, config: TrainConfig) -> _FlatBatch:
    """Shape rewards, run GAE per rollout, and concatenate all steps."""
    feats, acts, navs, olps, ovals, advs, tgts = [], [], [], [], [], [], []
    for rollout in buffer.rollouts:
        rewards = []
        for step in rollout:
            if step.total_reward is None:
                raise ValueError("assign_rewards must run before the update")
            init_lp = masked_log_softmax(params.frozen_actor, step.features, step.n_actions)[
                step.action_index
            ]
            rewards.append(
                shaped_reward(step.total_reward, step.log_prob, float(init_lp), config.kl_beta)
            )
        values = [step.value for step in rollout]
        adv, ret = compute_gae(rewards, values, config.gamma, config.gae_lambda)
        for i, step in enumerate(rollout):
            feats.append(step.features)
            acts.append(step.action_index)
            navs.append(step.n_actions)
            olps.append(step.log_prob)
            ovals.append(step.value)
            advs.append(adv[i])
            tgts.append(ret[i])
    advantages = np.asarray(advs)
    if config.advantage_norm and len(advantages) > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    return _FlatBatch(
        features=np.asarray(feats),
        action_index=np.asarray(acts, dtype=np.int64),
        n_actions=np.asarray(navs, dtype=np.int64),
        old_log_probs=np.asarray(olps),
        old_values=np.asarray(ovals),
        advantages=advantages,
        targets=np.asarray(tgts),
    )


def loss_and_grads(
    actor: np.ndarray,
    critic: np.ndarray,
    batch: _FlatBatch,
    epsilon: float,
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Combined loss (actor + critic) with analytic gradients.

    min/clip kinks follow the subgradient of the branch that is numerically
    active, which matches central differences everywhere except exactly at
    the kink.
    """
    n = len(batch.action_index)
    grad_actor = np.zeros_like(actor)
    grad_critic = np.zeros_like(critic)

    new_lps = np.empty(n)
    for i in range(n):
        f = batch.features[i]
        k = int(batch.n_actions[i])
        a = int(batch.action_index[i])
        log_probs = masked_log_softmax(actor, f, k)
        new_lps[i] = log_probs[a]

        ratio = np.exp(log_probs[a] - batch.old_log_probs[i])
        adv = batch.advantages[i]
        s_raw = ratio * adv
        s_clip = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * adv
        if s_raw <= s_clip:
            dsurr_dlp = ratio * adv
        else:
            inside = (1.0 - epsilon) <= ratio <= (1.0 + epsilon)
            dsurr_dlp = ratio * adv if inside else 0.0
        if dsurr_dlp != 0.0:
            probs = np.exp(log_probs)
            dlp_dlogits = -probs
            dlp_dlogits[a] += 1.0
            # loss is the negated mean surrogate
            grad_actor[:, :k] += (-dsurr_dlp / n) * np.outer(f, dlp_dlogits)

    a_loss = actor_loss(new_lps, batch.old_log_probs, batch.advantages, epsilon)

    values = batch.features @ critic
    raw_err = values - batch.targets
    clipped_v = np.clip(values, batch.old_values - epsilon, batch.old_values + epsilon)
    clip_err = clipped_v - batch.targets
    raw_sq = raw_err**2
    clip_sq = clip_err**2
    for i in range(n):
        if raw_sq[i] >= clip_sq[i]:
            grad_critic += (2.0 * raw_err[i] / n) * batch.features[i]
        else:
            clip_active = (
                batch.old_values[i] - epsilon < values[i] < batch.old_values[i] + epsilon
            )
            if clip_active:
                grad_critic += (2.0 * clip_err[i] / n) * batch.features[i]
    c_loss = critic_loss(values, batch.old_values, batch.targets, epsilon)

    return a_loss, c_loss, grad_actor, grad_critic


def distribution_stats(params: PolicyParams, batch: _FlatBatch) -> tuple[float, float]:
    """Mean KL(current || init) and mean entropy over the batch states."""
    kls, ents = [], []
    for i in range(len(batch.action_index)):
        f = batch.features[i]
        k = int(batch.n_actions[i])
        lp_new = masked_log_softmax(params.actor, f, k)
        lp_init = masked_log_softmax(params.frozen_actor, f, k)
        p = np.exp(lp_new)
        kls.append(float(np.sum(p * (lp_new - lp_init))))
        ents.append(float(-np.sum(p * lp_new)))
    return float(np.mean(kls)), float(np.mean(ents))


def ppo_update(buffer: ReplayBuffer, params: PolicyParams, config: TrainConfig) -> tuple[PolicyParams, dict]:
    """One optimization pass over the buffer; clears the buffer afterwards."""
    if not buffer.rollouts:
        raise ValueError("ppo_update on an empty buffer")
    batch = flatten_buffer(buffer, params, config)
    new = params.copy()
    a_loss = c_loss = 0.0
    for _ in range(config.epochs_per_batch):
        a_loss, c_loss, grad_a, grad_c = loss_and_grads(
            new.actor, new.critic, batch, config.clip_epsilon
        )
        new.actor = new.actor - config.learning_rate * grad_a
        new.critic = new.critic - config.learning_rate * grad_c
    kl, entropy = distribution_stats(new, batch)
    stats = {
        "actor_loss": a_loss,
        "critic_loss": c_loss,
        "kl_to_init": kl,
        "entropy": entropy,
        "n_rollouts": len(buffer),
        "n_steps": buffer.n_steps,
        "mean_advantage": float(batch.advantages.mean()),
        "mean_target": float(batch.targets.mean()),
    }
    buffer.clear()
    return new, stats


RolloutFn = Callable[[dict, PolicyParams, np.random.Generator], "object"]


def train(
    rollout_fn: RolloutFn,
    dataset: list[dict],
    params: PolicyParams,
    config: TrainConfig,
    log_path: str | Path | None = None,
) -> tuple[PolicyParams, list[dict]]:
    """Batched on-policy training over a QA dataset.

    rollout_fn(record, params, rng) must return an object with a
    ``trajectory`` (list of TrajectoryStep) and an ``f1`` float; the sampling
    planner lives inside it. Batches cycle through a seeded shuffle of the
    dataset, reshuffling when exhausted.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if config.n_batches < 0:
        raise ValueError("n_batches must be >= 0")
    rng = np.random.default_rng(config.seed)
    buffer = ReplayBuffer()
    history: list[dict] = []
    order: list[int] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for batch_idx in range(config.n_batches):
            f1s = []
            rollout_rewards = []
            for _ in range(config.batch_size):
                if not order:
                    order = list(rng.permutation(len(dataset)))
                record = dataset[order.pop()]
                result = rollout_fn(record, params, rng)
                assign_rewards(result.trajectory, result.f1, config.alpha)
                buffer.add(result.trajectory)
                f1s.append(result.f1)
                rollout_rewards.append(
                    result.f1
                    - config.alpha * sum(s.r_cp for s in result.trajectory)
                    - sum(s.r_fp for s in result.trajectory)
                )
            params, stats = ppo_update(buffer, params, config)
            stats["batch"] = batch_idx
            stats["mean_f1"] = float(np.mean(f1s))
            stats["mean_total_reward"] = float(np.mean(rollout_rewards))
            history.append(stats)
            if log_fh:
                log_fh.write(json.dumps(stats) + "\n")
            if batch_idx % 10 == 0:
                logger.info(
                    "batch %d: mean_f1=%.3f actor_loss=%.4f kl=%.4f",
                    batch_idx, stats["mean_f1"], stats["actor_loss"], stats["kl_to_init"],
                )
    finally:
        if log_fh:
            log_fh.close()
    return params, history
