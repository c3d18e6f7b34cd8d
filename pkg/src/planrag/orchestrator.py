"""Multi-turn rollout engine.

Each turn the planner is shown the current observation and proposes a plan
for the current target (the initial question, or an unanswered sub-question
slot). Serial decomposition advances one slot per turn; parallel
decomposition plans every unanswered slot in a single turn (one planner
invocation per slot, executions may run concurrently, commits are
serialized in slot order, and all of the turn's records share one turn
index). A linear plan at root, or AS once every slot is answered, ends the
rollout.

On the last allowed turn the phase's terminal plan is forced ([AS] when
summarize-ready, else [RA, AG]); if the turn budget still runs out without
a final answer the rollout raises with its partial trace attached.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .context import (
    DecompositionMode,
    Observation,
    RolloutContext,
    TurnRecord,
    new_context,
    render_observation,
)
from .corpus import Document
from .executors import (
    ExecutorSuite,
    decompose_parallel,
    decompose_serial,
    generate_answer,
    retrieve,
    rewrite_query,
    select_documents,
    summarize,
)
from .gateway import ChatClient, TokenUsage, ZERO_USAGE
from .policy import (
    PolicyParams,
    actor_forward,
    critic_forward,
    featurize,
    llm_plan,
    planner_template_text,
    select_action,
)
from .ppo import TrajectoryStep
from .reward import NominalCostTable, DEFAULT_COSTS, cost_penalty, token_f1
from .workflow import (
    DECOMPOSERS,
    ExecutorId,
    PhaseKind,
    WorkflowPlan,
    check_plan_text,
    enumerate_valid,
    plan_of,
)


class RolloutError(RuntimeError):
    def __init__(self, message: str, context: RolloutContext | None = None):
        super().__init__(message)
        self.context = context


@dataclass
class OrchestratorConfig:
    max_turn: int = 6
    k: int = 5
    fallback_enabled: bool = True
    parallel_workers: int = 4
    turn_cost_mode: str = "prose"
    cost_table: NominalCostTable = field(default_factory=lambda: DEFAULT_COSTS)

    def __post_init__(self) -> None:
        if self.max_turn < 1:
            raise ValueError("max_turn must be >= 1")


@dataclass
class PlannerDecision:
    plan: WorkflowPlan
    action_index: int
    n_actions: int
    log_prob: float
    value: float
    features: np.ndarray
    r_fp: int = 0
    planner_usage: TokenUsage = ZERO_USAGE


class CompactPlanner:
    """Linear-softmax policy planner; sample for training, greedy for eval."""

    def __init__(self, params: PolicyParams, mode: str = "greedy", rng: np.random.Generator | None = None):
        if mode not in ("greedy", "sample"):
            raise ValueError(f"unknown planner mode {mode!r}")
        self.params = params
        self.mode = mode
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def decide(self, obs: Observation) -> PlannerDecision:
        features = featurize(obs)
        dist = actor_forward(self.params, features, obs.phase)
        idx = select_action(dist, self.rng, self.mode)
        return PlannerDecision(
            plan=dist.plans[idx],
            action_index=idx,
            n_actions=len(dist.plans),
            log_prob=float(dist.log_probs[idx]),
            value=critic_forward(self.params, features),
            features=features,
        )

    def appraise(self, obs: Observation, plan: WorkflowPlan) -> PlannerDecision:
        """Decision record for an externally chosen plan (forced terminal)."""
        features = featurize(obs)
        dist = actor_forward(self.params, features, obs.phase)
        idx = next(i for i, p in enumerate(dist.plans) if p.steps == plan.steps)
        return PlannerDecision(
            plan=plan,
            action_index=idx,
            n_actions=len(dist.plans),
            log_prob=float(dist.log_probs[idx]),
            value=critic_forward(self.params, features),
            features=features,
        )


class LLMPlanner:
    """Gateway-backed planner. Unparseable or invalid replies fall back to
    the phase's terminal plan and are charged the format penalty."""

    def __init__(self, client: ChatClient):
        self.client = client

    def decide(self, obs: Observation) -> PlannerDecision:
        text, usage = llm_plan(obs, self.client)
        check = check_plan_text(text, obs.phase)
        catalogue = enumerate_valid(obs.phase)
        if check.ok:
            assert check.plan is not None
            idx = next(
                (i for i, p in enumerate(catalogue) if p.steps == check.plan.steps), -1
            )
            return PlannerDecision(
                plan=check.plan,
                action_index=idx,
                n_actions=len(catalogue),
                log_prob=0.0,
                value=0.0,
                features=featurize(obs),
                planner_usage=usage,
            )
        fallback = _terminal_plan(obs.phase)
        idx = next(i for i, p in enumerate(catalogue) if p.steps == fallback.steps)
        return PlannerDecision(
            plan=fallback,
            action_index=idx,
            n_actions=len(catalogue),
            log_prob=0.0,
            value=0.0,
            features=featurize(obs),
            r_fp=1,
            planner_usage=usage,
        )

    def appraise(self, obs: Observation, plan: WorkflowPlan) -> PlannerDecision:
        catalogue = enumerate_valid(obs.phase)
        idx = next(i for i, p in enumerate(catalogue) if p.steps == plan.steps)
        return PlannerDecision(
            plan=plan,
            action_index=idx,
            n_actions=len(catalogue),
            log_prob=0.0,
            value=0.0,
            features=featurize(obs),
        )


class ScriptedPlanner:
    """Replays a fixed plan sequence; used by tests and trace replays."""

    def __init__(self, plan_texts: list[str]):
        self._plans = [t for t in plan_texts]
        self._cursor = 0

    def decide(self, obs: Observation) -> PlannerDecision:
        if self._cursor >= len(self._plans):
            raise RolloutError("scripted planner ran out of plans")
        check = check_plan_text(self._plans[self._cursor], obs.phase)
        self._cursor += 1
        if not check.ok or check.plan is None:
            raise RolloutError(f"scripted plan {self._plans[self._cursor - 1]!r} invalid for {obs.phase.value}")
        catalogue = enumerate_valid(obs.phase)
        idx = next((i for i, p in enumerate(catalogue) if p.steps == check.plan.steps), -1)
        return PlannerDecision(
            plan=check.plan,
            action_index=idx,
            n_actions=len(catalogue),
            log_prob=0.0,
            value=0.0,
            features=featurize(obs),
        )

    def appraise(self, obs: Observation, plan: WorkflowPlan) -> PlannerDecision:
        return self.decide(obs)


def _terminal_plan(phase: PhaseKind) -> WorkflowPlan:
    if phase is PhaseKind.SUMMARIZE_READY:
        return plan_of("AS")
    return plan_of("RA", "AG")


@dataclass
class PlanOutcome:
    answer: str | None = None
    documents: list[Document] = field(default_factory=list)
    usage: TokenUsage = ZERO_USAGE
    retrieval_calls: int = 0
    sub_questions: list[str] | None = None
    decomposition: DecompositionMode | None = None


def execute_workflow(
    plan: WorkflowPlan,
    working_query: str,
    suite: ExecutorSuite,
    initial_question: str | None = None,
    slots=None,
) -> PlanOutcome:
    """Run a plan's steps left to right against the executor suite.

    QR replaces the working query, RA fills the working documents, DS
    filters them (no-op when there is nothing to filter), AG answers from
    (query, documents), AS composes from answered slots. Decomposition
    steps only record the sub-questions; the caller owns all context
    mutation, which keeps this function safe to run concurrently for
    parallel slots.
    """
    outcome = PlanOutcome()
    query = working_query
    docs: list[Document] = []
    usage = ZERO_USAGE
    for step in plan:
        if step is ExecutorId.QDS:
            subs, u = decompose_serial(query, suite.backend)
            outcome.sub_questions, outcome.decomposition = subs, DecompositionMode.SERIAL
            usage = usage + u
        elif step is ExecutorId.QDP:
            subs, u = decompose_parallel(query, suite.backend)
            outcome.sub_questions, outcome.decomposition = subs, DecompositionMode.PARALLEL
            usage = usage + u
        elif step is ExecutorId.QR:
            query, u = rewrite_query(query, suite.backend)
            usage = usage + u
        elif step is ExecutorId.RA:
            docs = retrieve(query, suite.index, suite.k)
            outcome.retrieval_calls += 1
        elif step is ExecutorId.DS:
            if docs:
                docs, u = select_documents(query, docs, suite.backend)
                usage = usage + u
        elif step is ExecutorId.AG:
            answer, u = generate_answer(query, docs, suite.backend)
            outcome.answer = answer
            usage = usage + u
        elif step is ExecutorId.AS:
            if initial_question is None or slots is None:
                raise RolloutError("AS outside a decomposed rollout")
            answer, u = summarize(initial_question, slots, suite.backend)
            outcome.answer = answer
            usage = usage + u
    outcome.documents = docs
    outcome.usage = usage
    return outcome


@dataclass
class RolloutMetrics:
    usage: TokenUsage
    planner_usage: TokenUsage
    retrieval_calls: int
    turn_count: int
    wall_time_s: float
    plans: list[WorkflowPlan]
    step_cost_penalties: list[float]


@dataclass
class RolloutResult:
    context: RolloutContext
    trajectory: list[TrajectoryStep]
    predicted_answer: str
    f1: float | None
    metrics: RolloutMetrics


def rollout(
    question: str,
    golds: list[str] | tuple[str, ...] | None,
    planner,
    suite: ExecutorSuite,
    config: OrchestratorConfig | None = None,
) -> RolloutResult:
    config = config or OrchestratorConfig()
    started = time.perf_counter()
    ctx = new_context(question)
    template = planner_template_text()
    trajectory: list[TrajectoryStep] = []
    planner_usage = ZERO_USAGE

    def record_step(decision: PlannerDecision, n_subq: int, obs: Observation) -> None:
        r_cp = cost_penalty(
            decision.plan, n_subq, config.cost_table, config.turn_cost_mode
        )
        trajectory.append(
            TrajectoryStep(
                features=decision.features,
                phase=obs.phase,
                action_index=decision.action_index,
                n_actions=decision.n_actions,
                log_prob=decision.log_prob,
                value=decision.value,
                r_cp=r_cp,
                r_fp=decision.r_fp,
            )
        )

    def decide_or_force(obs: Observation, last_turn: bool) -> PlannerDecision:
        if last_turn:
            forced = _terminal_plan(obs.phase)
            return planner.appraise(obs, forced)
        decision = planner.decide(obs)
        if decision.plan.steps[0] in DECOMPOSERS and obs.phase is not PhaseKind.ROOT:
            raise RolloutError("planner emitted a decomposition outside root", ctx)
        return decision

    turn = 0
    while turn < config.max_turn and ctx.predicted_answer is None:
        phase = ctx.phase()
        last_turn = turn == config.max_turn - 1

        if phase is PhaseKind.ROOT:
            obs = render_observation(ctx, ctx.initial_question, template)
            decision = decide_or_force(obs, last_turn)
            planner_usage = planner_usage + decision.planner_usage
            outcome = execute_workflow(decision.plan, ctx.initial_question, suite)
            if outcome.sub_questions is not None:
                ctx.create_slots(outcome.sub_questions, outcome.decomposition)
            elif outcome.answer is not None:
                ctx.root_documents = outcome.documents
                ctx.commit_final_answer(outcome.answer)
            record_step(decision, len(outcome.sub_questions or ()), obs)
            ctx.append_turn(
                TurnRecord(turn, ctx.initial_question, decision.plan, outcome.usage, outcome.retrieval_calls)
            )

        elif phase is PhaseKind.SUB_QUESTION:
            mode = ctx.slots[0].mode
            indices = (
                [ctx.first_unanswered()]
                if mode is DecompositionMode.SERIAL
                else ctx.unanswered_indices()
            )
            staged: list[tuple[int, PlannerDecision, Observation]] = []
            for i in indices:
                obs = render_observation(ctx, ctx.slots[i].text, template)
                decision = decide_or_force(obs, last_turn)
                planner_usage = planner_usage + decision.planner_usage
                staged.append((i, decision, obs))

            def run(entry: tuple[int, PlannerDecision, Observation]) -> PlanOutcome:
                i, decision, _ = entry
                return execute_workflow(
                    decision.plan, ctx.working_query_for_slot(i), suite
                )

            if mode is DecompositionMode.PARALLEL and len(staged) > 1:
                workers = min(config.parallel_workers, len(staged))
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    outcomes = list(pool.map(run, staged))
            else:
                outcomes = [run(entry) for entry in staged]

            # single serialized commit point, in slot order
            for (i, decision, obs), outcome in zip(staged, outcomes):
                if outcome.answer is None:
                    raise RolloutError(f"slot {i} plan produced no answer", ctx)
                ctx.slots[i].documents = outcome.documents
                ctx.commit_slot_answer(i, outcome.answer)
                record_step(decision, 0, obs)
                ctx.append_turn(
                    TurnRecord(turn, ctx.slots[i].text, decision.plan, outcome.usage, outcome.retrieval_calls)
                )

        else:  # summarize_ready
            obs = render_observation(ctx, ctx.initial_question, template)
            decision = decide_or_force(obs, last_turn)
            planner_usage = planner_usage + decision.planner_usage
            outcome = execute_workflow(
                decision.plan,
                ctx.initial_question,
                suite,
                initial_question=ctx.initial_question,
                slots=ctx.slots,
            )
            if outcome.answer is None:
                raise RolloutError("summarize produced no answer", ctx)
            ctx.commit_final_answer(outcome.answer)
            record_step(decision, 0, obs)
            ctx.append_turn(
                TurnRecord(turn, ctx.initial_question, decision.plan, outcome.usage, outcome.retrieval_calls)
            )

        turn += 1

    if ctx.predicted_answer is None:
        raise RolloutError(f"turn budget {config.max_turn} exhausted without an answer", ctx)

    f1 = token_f1(ctx.predicted_answer, golds) if golds else None
    metrics = RolloutMetrics(
        usage=ctx.usage_total(),
        planner_usage=planner_usage,
        retrieval_calls=ctx.retrieval_total(),
        turn_count=ctx.turn_count(),
        wall_time_s=time.perf_counter() - started,
        plans=[rec.plan for rec in ctx.turn_log],
        step_cost_penalties=[step.r_cp for step in trajectory],
    )
    return RolloutResult(
        context=ctx,
        trajectory=trajectory,
        predicted_answer=ctx.predicted_answer,
        f1=f1,
        metrics=metrics,
    )


def training_rollout_fn(suite: ExecutorSuite, config: OrchestratorConfig):
    """Adapter for ppo.train: builds a sampling planner around the current
    params and runs one rollout per dataset record."""

    def fn(record: dict, params: PolicyParams, rng: np.random.Generator) -> RolloutResult:
        planner = CompactPlanner(params, mode="sample", rng=rng)
        return rollout(
            record["question"], record.get("golden_answers"), planner, suite, config
        )

    return fn
