"""Answer quality, cost penalties, and the planner's scalar reward.

The reward for one planner decision is

    total = f1 - alpha * cost_penalty - format_penalty

where cost_penalty bundles a scaled token cost, a turn cost, and a {0,1}
retrieval indicator. Token costs come from a fixed per-executor nominal USD
table and are scaled by the cost of the most expensive single workflow
(reference_max), then clamped to [0, 1].
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field

from .workflow import LLM_BACKED, DECOMPOSERS, ExecutorId, PlanCheck, WorkflowPlan

_ARTICLES = {"a", "an", "the"}
_PUNCT_TABLE = {ord(ch): " " for ch in string.punctuation}


def normalize_answer(text: str) -> list[str]:
    """Lowercase, break punctuation into spaces, drop articles, split.

    Punctuation maps to a space (not deletion) so hyphenated forms keep
    their parts: "non-ferrous" -> ["non", "ferrous"].
    """
    lowered = text.lower().translate(_PUNCT_TABLE)
    return [tok for tok in lowered.split() if tok not in _ARTICLES]


def token_f1(prediction: str, golds: list[str] | tuple[str, ...]) -> float:
    """Best token-bag F1 of the prediction against any gold answer."""
    if not golds:
        raise ValueError("at least one gold answer required")
    best = 0.0
    pred_tokens = normalize_answer(prediction)
    for gold in golds:
        gold_tokens = normalize_answer(gold)
        if not pred_tokens and not gold_tokens:
            best = max(best, 1.0)
            continue
        if not pred_tokens or not gold_tokens:
            continue
        overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
        if overlap == 0:
            continue
        precision = overlap / len(pred_tokens)
        recall = overlap / len(gold_tokens)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


@dataclass(frozen=True)
class NominalCostTable:
    """Per-executor nominal USD cost of one invocation, and the scaling
    reference: the nominal cost of the most expensive single workflow
    (QR + DS + AG + AS)."""

    per_executor: dict[ExecutorId, float] = field(
        default_factory=lambda: {
            ExecutorId.QDS: 0.91e-4,
            ExecutorId.QDP: 1.00e-4,
            ExecutorId.QR: 0.88e-4,
            ExecutorId.DS: 2.08e-4,
            ExecutorId.AG: 1.58e-4,
            ExecutorId.AS: 1.48e-4,
        }
    )
    reference_max: float = 6.02e-4

    def cost_of(self, executor: ExecutorId) -> float:
        if executor not in LLM_BACKED:
            return 0.0
        return self.per_executor[executor]


DEFAULT_COSTS = NominalCostTable()


def token_cost_scaled(plans: list[WorkflowPlan] | tuple[WorkflowPlan, ...], table: NominalCostTable = DEFAULT_COSTS) -> float:
    """Nominal token cost of all LLM-backed steps, scaled and clamped to [0,1].

    RA contributes nothing: retrieval spends no model tokens.
    """
    raw = 0.0
    for plan in plans:
        for step in plan:
            raw += table.cost_of(step)
    return min(1.0, max(0.0, raw / table.reference_max))


def turn_cost(plan: WorkflowPlan, n_subquestions: int = 0, mode: str = "prose") -> float:
    """Extra-round penalty for decomposition plans.

    mode "prose" (default): QDS pays 0.25 per sub-question it creates, QDP a
    flat 0.25. mode "table" swaps the scaling: QDP pays 0.25 per slot, QDS a
    flat 0.25. Everything else costs 0 in both modes.
    """
    if n_subquestions < 0 or n_subquestions > 4:
        raise ValueError("n_subquestions must be in [0, 4]")
    if n_subquestions > 0 and plan.steps[0] not in DECOMPOSERS:
        raise ValueError("n_subquestions only applies to decomposition plans")
    if mode not in ("prose", "table"):
        raise ValueError(f"unknown turn cost mode {mode!r}")
    head = plan.steps[0] if len(plan) == 1 else None
    if head is ExecutorId.QDS:
        return 0.25 * n_subquestions if mode == "prose" else 0.25
    if head is ExecutorId.QDP:
        return 0.25 if mode == "prose" else 0.25 * n_subquestions
    return 0.0


def retrieval_indicator(plan: WorkflowPlan) -> int:
    return 1 if ExecutorId.RA in plan.steps else 0


def cost_penalty(
    plan: WorkflowPlan,
    n_subquestions: int = 0,
    table: NominalCostTable = DEFAULT_COSTS,
    mode: str = "prose",
) -> float:
    """Token cost + turn cost + retrieval indicator for one plan."""
    return (
        token_cost_scaled([plan], table)
        + turn_cost(plan, n_subquestions, mode)
        + retrieval_indicator(plan)
    )


def format_penalty(check: PlanCheck) -> int:
    """1 if the planner's reply failed to parse or validate, else 0."""
    return 0 if check.ok else 1


def total_reward(f1: float, cost: float, fp: int, alpha: float) -> float:
    return f1 - alpha * cost - fp


@dataclass(frozen=True)
class RewardBreakdown:
    """Reward components for one planner decision."""

    f1: float
    token_cost: float
    turn_cost: float
    retrieval_indicator: int
    format_penalty: int
    alpha: float

    @property
    def cost_penalty(self) -> float:
        return self.token_cost + self.turn_cost + self.retrieval_indicator

    @property
    def total(self) -> float:
        return total_reward(self.f1, self.cost_penalty, self.format_penalty, self.alpha)


