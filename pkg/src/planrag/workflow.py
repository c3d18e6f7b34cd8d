"""Workflow plan grammar: parsing, validity rules, and enumeration.

A workflow plan is a comma-separated sequence of executor ids, e.g.
``"QR, RA, AG"``. Plans are validated against a planning phase, because
what counts as a legal plan depends on where the rollout currently is:

* ``root``: the initial question, no sub-question slots yet
* ``sub_question``: slots exist and at least one is unanswered
* ``summarize_ready``: slots exist and all are answered

``enumerate_valid`` returns the full action catalogue for a phase, sorted by
(plan length, step names). That order is frozen by the test suite.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field


class ExecutorId(str, enum.Enum):
    """The seven executors a plan can invoke.

    QDS/QDP decompose a question into serial/parallel sub-questions, QR
    rewrites a noisy query, RA retrieves documents, DS filters retrieved
    documents, AG answers from the working query and documents, AS composes
    the final answer from answered sub-questions.
    """

    QDS = "QDS"
    QDP = "QDP"
    QR = "QR"
    DS = "DS"
    RA = "RA"
    AG = "AG"
    AS = "AS"


class PhaseKind(str, enum.Enum):
    ROOT = "root"
    SUB_QUESTION = "sub_question"
    SUMMARIZE_READY = "summarize_ready"


# Executors whose completions come from a language model. RA is a retrieval
# call and spends no model tokens.
LLM_BACKED: frozenset[ExecutorId] = frozenset(
    {ExecutorId.QDS, ExecutorId.QDP, ExecutorId.QR, ExecutorId.DS, ExecutorId.AG, ExecutorId.AS}
)

DECOMPOSERS: frozenset[ExecutorId] = frozenset({ExecutorId.QDS, ExecutorId.QDP})

# Plans longer than this cannot be valid (the longest legal linear plan is
# QR, RA, DS, AG); used by enumeration and by fuzz bounds in tests.
MAX_PLAN_LEN = 4


@dataclass(frozen=True)
class WorkflowPlan:
    steps: tuple[ExecutorId, ...]

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("a workflow plan needs at least one step")

    def render(self) -> str:
        return ", ".join(s.value for s in self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


class WorkflowParseError(ValueError):
    """Raised for text that is not a comma-separated executor sequence.

    ``token`` is the offending fragment, ``position`` its 1-based index in
    the comma-split list.
    """

    def __init__(self, token: str, position: int):
        self.token = token
        self.position = position
        super().__init__(f"unknown executor {token!r} at position {position}")


_ID_LOOKUP = {e.value: e for e in ExecutorId}


def parse_workflow(text: str) -> WorkflowPlan:
    """Parse comma-separated executor ids, case-insensitive, whitespace-tolerant."""
    if not text or not text.strip():
        raise WorkflowParseError(token="", position=1)
    steps = []
    for pos, raw in enumerate(text.split(","), start=1):
        token = raw.strip().upper()
        if token not in _ID_LOOKUP:
            raise WorkflowParseError(token=raw.strip(), position=pos)
        steps.append(_ID_LOOKUP[token])
    return WorkflowPlan(tuple(steps))


@dataclass
class ValidityReport:
    valid: bool
    violations: list[str] = field(default_factory=list)


def validate(plan: WorkflowPlan, phase: PhaseKind) -> ValidityReport:
    """Check a plan against the structural rules for the given phase.

    Violation slugs are stable strings used by tests and error messages:
    singleton_only, ag_terminal, qr_leads_ra, ds_needs_ra, ra_once, ds_once,
    as_phase, decompose_root_only.
    """
    steps = plan.steps
    bad: list[str] = []

    singletons = {ExecutorId.QDS, ExecutorId.QDP, ExecutorId.AS}
    if any(s in singletons for s in steps) and len(steps) != 1:
        bad.append("singleton_only")

    is_singleton_plan = len(steps) == 1 and steps[0] in singletons
    if not is_singleton_plan:
        # linear plans generate their answer in a single terminal AG
        if steps.count(ExecutorId.AG) != 1 or steps[-1] != ExecutorId.AG:
            bad.append("ag_terminal")

    if ExecutorId.QR in steps:
        # a rewrite is only allowed as the opening step, feeding retrieval
        if (
            steps.count(ExecutorId.QR) > 1
            or steps[0] != ExecutorId.QR
            or len(steps) < 2
            or steps[1] != ExecutorId.RA
        ):
            bad.append("qr_leads_ra")

    if ExecutorId.DS in steps:
        ds_at = steps.index(ExecutorId.DS)
        if ExecutorId.RA not in steps[:ds_at]:
            bad.append("ds_needs_ra")

    if steps.count(ExecutorId.RA) > 1:
        bad.append("ra_once")

    if steps.count(ExecutorId.DS) > 1:
        bad.append("ds_once")

    has_as = ExecutorId.AS in steps
    if phase is PhaseKind.SUMMARIZE_READY:
        if steps != (ExecutorId.AS,):
            bad.append("as_phase")
    elif has_as:
        bad.append("as_phase")

    if phase is not PhaseKind.ROOT and any(s in DECOMPOSERS for s in steps):
        bad.append("decompose_root_only")

    return ValidityReport(valid=not bad, violations=bad)


@dataclass
class PlanCheck:
    """Non-raising parse+validate result, consumed by the format penalty."""

    plan: WorkflowPlan | None
    parse_error: WorkflowParseError | None
    violations: list[str]

    @property
    def ok(self) -> bool:
        return self.plan is not None and not self.violations


def check_plan_text(text: str, phase: PhaseKind) -> PlanCheck:
    try:
        plan = parse_workflow(text)
    except WorkflowParseError as err:
        return PlanCheck(plan=None, parse_error=err, violations=[])
    report = validate(plan, phase)
    return PlanCheck(plan=plan, parse_error=None, violations=report.violations)


def _enumerate(phase: PhaseKind) -> tuple[WorkflowPlan, ...]:
    plans = []
    ids = list(ExecutorId)
    for length in range(1, MAX_PLAN_LEN + 1):
        for combo in itertools.product(ids, repeat=length):
            plan = WorkflowPlan(combo)
            if validate(plan, phase).valid:
                plans.append(plan)
    plans.sort(key=lambda p: (len(p.steps), tuple(s.value for s in p.steps)))
    return tuple(plans)


_CATALOGUE: dict[PhaseKind, tuple[WorkflowPlan, ...]] = {}


def enumerate_valid(phase: PhaseKind) -> tuple[WorkflowPlan, ...]:
    """All valid plans for a phase, deterministic order, duplicate-free."""
    if phase not in _CATALOGUE:
        _CATALOGUE[phase] = _enumerate(phase)
    return _CATALOGUE[phase]


def plan_of(*names: str) -> WorkflowPlan:
    """Convenience constructor: plan_of("RA", "AG")."""
    return WorkflowPlan(tuple(ExecutorId(n) for n in names))
