"""Dataset loading, greedy evaluation, and report rendering."""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .gateway import TokenUsage, ZERO_USAGE
from .orchestrator import (
    CompactPlanner,
    OrchestratorConfig,
    RolloutError,
    rollout,
)
from .executors import ExecutorError, ExecutorSuite
from .policy import PolicyParams


class DatasetError(ValueError):
    pass


def load_dataset(path: str) -> list[dict]:
    """JSONL records: {"question": str, "golden_answers": [str, ...]}.

    Errors carry the 1-based line number. Blank lines are skipped.
    """
    records: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({err.msg})") from err
            if not isinstance(obj, dict):
                raise DatasetError(f"{path}:{lineno}: record must be an object")
            question = obj.get("question")
            golds = obj.get("golden_answers")
            if not isinstance(question, str) or not question.strip():
                raise DatasetError(f"{path}:{lineno}: missing or empty 'question'")
            if (
                not isinstance(golds, list)
                or not golds
                or not all(isinstance(g, str) for g in golds)
            ):
                raise DatasetError(
                    f"{path}:{lineno}: 'golden_answers' must be a non-empty list of strings"
                )
            records.append({"question": question, "golden_answers": golds})
    if not records:
        raise DatasetError(f"{path}: dataset is empty")
    return records


@dataclass
class ItemResult:
    question: str
    f1: float
    token_cost_usd: float
    retrieval_calls: int
    turn_count: int
    cost_penalty: float  # sum of the rollout's per-step cost penalties
    predicted_answer: str
    plans: list[str]


@dataclass
class MetricsReport:
    dataset: str
    n_items: int
    n_failures: int
    mean_f1: float  # percentage, 0..100
    mean_token_cost_usd: float
    mean_retrieval_calls: float
    mean_turns: float
    mean_cost_penalty: float
    wall_time_s: float
    items: list[ItemResult] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)


def evaluate(
    records: list[dict],
    params: PolicyParams,
    suite: ExecutorSuite,
    config: OrchestratorConfig | None = None,
    pricing=None,
    model: str = "",
    dataset_name: str = "dataset",
) -> MetricsReport:
    """Greedy-policy pass over the records.

    Per-item executor or rollout failures are collected, not fatal; failed
    items score 0 and are excluded from cost/turn averages.
    """
    config = config or OrchestratorConfig()
    started = time.perf_counter()
    items: list[ItemResult] = []
    failures: list[tuple[str, str]] = []
    for record in records:
        planner = CompactPlanner(params, mode="greedy")
        try:
            result = rollout(
                record["question"], record["golden_answers"], planner, suite, config
            )
        except (RolloutError, ExecutorError) as err:
            failures.append((record["question"], str(err)))
            continue
        usd = 0.0
        if pricing is not None and model:
            usd = pricing.usage_to_usd(result.metrics.usage, model)
        items.append(
            ItemResult(
                question=record["question"],
                f1=result.f1 if result.f1 is not None else 0.0,
                token_cost_usd=usd,
                retrieval_calls=result.metrics.retrieval_calls,
                turn_count=result.metrics.turn_count,
                cost_penalty=sum(result.metrics.step_cost_penalties),
                predicted_answer=result.predicted_answer,
                plans=[plan.render() for plan in result.metrics.plans],
            )
        )
    n = len(records)
    # items carry raw 0..1 token F1; the report aggregates as a percentage,
    # with failed rollouts scoring zero
    scored_f1 = [it.f1 for it in items] + [0.0] * len(failures)
    report = MetricsReport(
        dataset=dataset_name,
        n_items=n,
        n_failures=len(failures),
        mean_f1=float(np.mean(scored_f1)) * 100.0 if scored_f1 else 0.0,
        mean_token_cost_usd=float(np.mean([it.token_cost_usd for it in items])) if items else 0.0,
        mean_retrieval_calls=float(np.mean([it.retrieval_calls for it in items])) if items else 0.0,
        mean_turns=float(np.mean([it.turn_count for it in items])) if items else 0.0,
        mean_cost_penalty=float(np.mean([it.cost_penalty for it in items])) if items else 0.0,
        wall_time_s=time.perf_counter() - started,
        items=items,
        failures=failures,
    )
    return report


CSV_COLUMNS = ["dataset", "f1", "token_cost_usd", "retrieval_calls", "turns"]


def report_csv(reports: list[MetricsReport]) -> str:
    """One row per report, fixed column order, deterministic formatting."""
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for rep in reports:
        buf.write(
            f"{rep.dataset},{rep.mean_f1:.6f},{rep.mean_token_cost_usd:.8f},"
            f"{rep.mean_retrieval_calls:.4f},{rep.mean_turns:.4f}\n"
        )
    return buf.getvalue()


def report_markdown(reports: list[MetricsReport]) -> str:
    lines = [
        "| dataset | F1 | token cost (USD) | retrieval calls | turns |",
        "| --- | --- | --- | --- | --- |",
    ]
    for rep in reports:
        lines.append(
            f"| {rep.dataset} | {rep.mean_f1:.4f} | {rep.mean_token_cost_usd:.8f} "
            f"| {rep.mean_retrieval_calls:.2f} | {rep.mean_turns:.2f} |"
        )
    return "\n".join(lines) + "\n"
