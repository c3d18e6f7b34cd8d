"""Mutable per-rollout state: sub-question slots, turn log, and the
observation the planner sees.

Slot answers are write-once; the final answer is write-once. Serial slots
must be answered in order, and later serial slots see earlier answers as an
appended single-line "Known facts:" block on their working query (the slot
text itself is never rewritten).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .corpus import Document
from .gateway import TokenUsage, ZERO_USAGE
from .workflow import PhaseKind, WorkflowPlan

MAX_SLOTS = 4


class ContextError(ValueError):
    pass


class DecompositionMode(str, Enum):
    SERIAL = "serial"
    PARALLEL = "parallel"


@dataclass
class SubQuestionSlot:
    text: str
    mode: DecompositionMode
    documents: list[Document] = field(default_factory=list)
    answer: str | None = None


@dataclass
class TurnRecord:
    turn_index: int
    target_question: str
    plan: WorkflowPlan
    usage: TokenUsage
    retrieval_calls: int


@dataclass
class Observation:
    """What the planner is shown for one decision.

    n_slots / n_answered are derived conveniences for the feature map so it
    does not re-parse the rendered summary string.
    """

    planner_prompt: str
    question: str
    phase: PhaseKind
    context_summary: str
    n_slots: int = 0
    n_answered: int = 0


@dataclass
class RolloutContext:
    initial_question: str
    slots: list[SubQuestionSlot] = field(default_factory=list)
    root_documents: list[Document] = field(default_factory=list)
    turn_log: list[TurnRecord] = field(default_factory=list)
    predicted_answer: str | None = None

    def phase(self) -> PhaseKind:
        if not self.slots:
            return PhaseKind.ROOT
        if any(slot.answer is None for slot in self.slots):
            return PhaseKind.SUB_QUESTION
        return PhaseKind.SUMMARIZE_READY

    def create_slots(self, sub_questions: list[str], mode: DecompositionMode) -> None:
        if self.slots:
            raise ContextError("rollout already decomposed once")
        if not sub_questions:
            raise ContextError("decomposition produced no sub-questions")
        if len(sub_questions) > MAX_SLOTS:
            raise ContextError(f"at most {MAX_SLOTS} sub-question slots allowed")
        self.slots = [SubQuestionSlot(text=q, mode=mode) for q in sub_questions]

    def first_unanswered(self) -> int:
        for i, slot in enumerate(self.slots):
            if slot.answer is None:
                return i
        raise ContextError("all slots answered")

    def unanswered_indices(self) -> list[int]:
        return [i for i, slot in enumerate(self.slots) if slot.answer is None]

    def commit_slot_answer(self, index: int, answer: str) -> None:
        slot = self.slots[index]
        if slot.answer is not None:
            raise ContextError(f"slot {index} already answered")
        if slot.mode is DecompositionMode.SERIAL:
            # serial slots resolve strictly in order
            if any(s.answer is None for s in self.slots[:index]):
                raise ContextError(f"serial slot {index} answered out of order")
        slot.answer = answer

    def commit_final_answer(self, answer: str) -> None:
        if self.predicted_answer is not None:
            raise ContextError("final answer already set")
        self.predicted_answer = answer

    def working_query_for_slot(self, index: int) -> str:
        """Slot text, plus earlier serial answers as one 'Known facts:' line."""
        slot = self.slots[index]
        if slot.mode is not DecompositionMode.SERIAL or index == 0:
            return slot.text
        known = [s.answer for s in self.slots[:index] if s.answer is not None]
        if not known:
            return slot.text
        return f"{slot.text} Known facts: {'; '.join(known)}."

    def turn_count(self) -> int:
        return len({rec.turn_index for rec in self.turn_log})

    def retrieval_total(self) -> int:
        return sum(rec.retrieval_calls for rec in self.turn_log)

    def usage_total(self) -> TokenUsage:
        total = ZERO_USAGE
        for rec in self.turn_log:
            total = total + rec.usage
        return total

    def append_turn(self, record: TurnRecord) -> None:
        if self.turn_log and record.turn_index < self.turn_log[-1].turn_index:
            raise ContextError("turn indices must be non-decreasing")
        self.turn_log.append(record)

    def trace(self) -> dict:
        """JSON-friendly rollout trace for inspection and the run command."""
        return {
            "question": self.initial_question,
            "sub_questions": [slot.text for slot in self.slots],
            "sub_answers": [slot.answer for slot in self.slots],
            "documents": {
                f"sub_question_{i + 1}": [doc.doc_id for doc in slot.documents]
                for i, slot in enumerate(self.slots)
                if slot.documents
            }
            | ({"root": [doc.doc_id for doc in self.root_documents]} if self.root_documents else {}),
            "answer": self.predicted_answer,
            "turns": [
                {
                    "turn": rec.turn_index,
                    "target": rec.target_question,
                    "plan": rec.plan.render(),
                    "retrieval_calls": rec.retrieval_calls,
                    "prompt_tokens": rec.usage.prompt_tokens,
                    "completion_tokens": rec.usage.completion_tokens,
                }
                for rec in self.turn_log
            ],
        }

    def trace_json(self) -> str:
        return json.dumps(self.trace(), indent=2, sort_keys=False)


def render_context_summary(ctx: RolloutContext) -> str:
    """Numbered sub-question / sub-answer lines; answered slots only get
    answer lines. Empty string at root."""
    lines: list[str] = []
    for i, slot in enumerate(ctx.slots, start=1):
        lines.append(f"Sub-question {i}: {slot.text}")
        if slot.answer is not None:
            lines.append(f"Sub-answer {i}: {slot.answer}")
    return "\n".join(lines)


def new_context(question: str) -> RolloutContext:
    if not question or not question.strip():
        raise ContextError("question must be non-empty")
    return RolloutContext(initial_question=question)


def render_observation(ctx: RolloutContext, target: str, planner_template: str) -> Observation:
    """Build the planner's view for one decision.

    target must be the initial question or the text of an unanswered slot.
    planner_template carries '{content of Question}' / '{content of Context}'
    placeholders.
    """
    valid_targets = {ctx.initial_question} | {
        slot.text for slot in ctx.slots if slot.answer is None
    }
    phase = ctx.phase()
    if phase is PhaseKind.SUMMARIZE_READY:
        valid_targets = {ctx.initial_question}
    if target not in valid_targets:
        raise ContextError(f"target {target!r} is not plannable in phase {phase.value}")
    summary = render_context_summary(ctx)
    prompt = planner_template.replace("{content of Question}", target).replace(
        "{content of Context}", summary if summary else "(no sub-questions yet)"
    )
    return Observation(
        planner_prompt=prompt,
        question=target,
        phase=phase,
        context_summary=summary,
        n_slots=len(ctx.slots),
        n_answered=sum(1 for slot in ctx.slots if slot.answer is not None),
    )
