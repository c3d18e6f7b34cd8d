"""Compact linear planner policy over hand-built question features.

The actor is a D x A matrix of logits per action column, the critic a D
vector; actions are the phase's enumerated plans, so invalid plans are
structurally unreachable (they are simply not columns of the current
phase's slice). Per-phase action lists share columns by position, and the
phase one-hot in the feature vector lets the same matrix express different
preferences per phase.

An LLM planner mode is also provided: it sends the rendered planner prompt
through the chat gateway and returns the raw reply for the orchestrator to
parse and penalize.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .context import Observation
from .corpus import tokenize
from .gateway import ChatClient, TokenUsage
from .workflow import PhaseKind, WorkflowPlan, enumerate_valid

D_FEATURES = 16
A_MAX = 7  # root has the largest action catalogue

_WH_WORDS = ("who", "what", "where", "when", "which", "how")
_CONJUNCTIONS = {"and", "or", "but"}
_PHASE_ORDER = (PhaseKind.ROOT, PhaseKind.SUB_QUESTION, PhaseKind.SUMMARIZE_READY)


def featurize(obs: Observation) -> np.ndarray:
    """Fixed 16-dim feature vector; all components finite and in [0, 2]."""
    tokens = tokenize(obs.question)
    vec = np.zeros(D_FEATURES, dtype=np.float64)
    vec[0] = min(len(tokens), 40) / 20.0

    wh = next((t for t in tokens if t in _WH_WORDS), None)
    wh_index = _WH_WORDS.index(wh) if wh is not None else len(_WH_WORDS)
    vec[1 + wh_index] = 1.0

    comparative = (
        "higher" in tokens
        or "more" in tokens
        or (len(tokens) >= 3 and "or" in tokens[1:-1])
    )
    vec[8] = 1.0 if comparative else 0.0
    vec[9] = min(sum(1 for t in tokens if t in _CONJUNCTIONS), 4) / 4.0
    vec[10 + _PHASE_ORDER.index(obs.phase)] = 1.0
    vec[13] = obs.n_answered / obs.n_slots if obs.n_slots else 0.0
    vec[14] = 1.0
    return vec


@dataclass
class PolicyParams:
    actor: np.ndarray  # (D_FEATURES, A_MAX)
    critic: np.ndarray  # (D_FEATURES,)
    frozen_actor: np.ndarray
    frozen_critic: np.ndarray

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            actor=self.actor.copy(),
            critic=self.critic.copy(),
            frozen_actor=self.frozen_actor.copy(),
            frozen_critic=self.frozen_critic.copy(),
        )

    def save(self, path: str | Path) -> None:
        payload = {
            "d": D_FEATURES,
            "a_max": A_MAX,
            "actor": self.actor.tolist(),
            "critic": self.critic.tolist(),
            "frozen_actor": self.frozen_actor.tolist(),
            "frozen_critic": self.frozen_critic.tolist(),
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "PolicyParams":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("d") != D_FEATURES or payload.get("a_max") != A_MAX:
            raise ValueError("checkpoint shape does not match this policy")
        return PolicyParams(
            actor=np.asarray(payload["actor"], dtype=np.float64),
            critic=np.asarray(payload["critic"], dtype=np.float64),
            frozen_actor=np.asarray(payload["frozen_actor"], dtype=np.float64),
            frozen_critic=np.asarray(payload["frozen_critic"], dtype=np.float64),
        )


def init_params(seed: int | None = None, scale: float = 0.0) -> PolicyParams:
    """Zero-initialized by default (uniform policy). The init copy is frozen
    for the KL anchor and never updated."""
    if scale > 0.0:
        rng = np.random.default_rng(seed)
        actor = rng.normal(0.0, scale, size=(D_FEATURES, A_MAX))
        critic = rng.normal(0.0, scale, size=D_FEATURES)
    else:
        actor = np.zeros((D_FEATURES, A_MAX))
        critic = np.zeros(D_FEATURES)
    return PolicyParams(
        actor=actor,
        critic=critic,
        frozen_actor=actor.copy(),
        frozen_critic=critic.copy(),
    )


@dataclass(frozen=True)
class ActionDistribution:
    plans: tuple[WorkflowPlan, ...]
    probs: np.ndarray
    log_probs: np.ndarray


def masked_log_softmax(actor: np.ndarray, features: np.ndarray, n_actions: int) -> np.ndarray:
    """Log-probabilities over the first n_actions columns; the rest carry
    zero probability by construction."""
    if n_actions < 1 or n_actions > actor.shape[1]:
        raise ValueError(f"n_actions must be in [1, {actor.shape[1]}]")
    logits = features @ actor[:, :n_actions]
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    return shifted - log_z


def actor_forward(params: PolicyParams, features: np.ndarray, phase: PhaseKind) -> ActionDistribution:
    plans = enumerate_valid(phase)
    log_probs = masked_log_softmax(params.actor, features, len(plans))
    return ActionDistribution(plans=plans, probs=np.exp(log_probs), log_probs=log_probs)


def critic_forward(params: PolicyParams, features: np.ndarray) -> float:
    return float(params.critic @ features)


def select_action(
    dist: ActionDistribution,
    rng: int | np.random.Generator | None = None,
    mode: str = "sample",
) -> int:
    """Pick an action index. greedy: argmax, ties to the lowest index.
    sample: categorical draw from the given generator or seed."""
    if mode == "greedy":
        return int(np.argmax(dist.probs))
    if mode != "sample":
        raise ValueError(f"unknown selection mode {mode!r}")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    # normalize away float drift so choice() never complains
    p = dist.probs / dist.probs.sum()
    return int(gen.choice(len(p), p=p))


def planner_template_text() -> str:
    return resources.files("planrag.prompts").joinpath("planner.txt").read_text("utf-8")


def llm_plan(obs: Observation, client: ChatClient) -> tuple[str, TokenUsage]:
    """Ask the gateway-backed planner for a workflow string.

    The reply is returned raw; parsing, validation, and the format penalty
    are the orchestrator's job.
    """
    from .executors import parse_template  # local import avoids a cycle

    template = parse_template("planner", obs.planner_prompt)
    messages = template.render()
    reply = client.chat(messages)
    return reply.text, reply.usage
