"""Deterministic synthetic QA worlds with a scripted, role-faithful backend.

A world is a set of (subject, relation, object) facts, a corpus with one
document per fact plus filler docs, and a balanced set of questions in four
kinds:

* single_hop: "What is the color of E?", answerable from parametric memory
* noisy_single_hop: the same with a filler prefix the query rewriter strips
* serial_2hop: "Who is the mentor of the owner of E?", which needs
  decomposition; the second hop depends on the first answer
* parallel_compare: "Which has a higher rating, E1 or E2?", two independent
  lookups plus a comparison

All entity and value names are unique generated tokens (ratings are unique
integers), so a distractor answer never shares a token with its gold. The
scripted backend parses the artifact's own rendered prompts and answers the
way an ideal-but-limited model would: decomposers emit the question's
template sub-questions, the rewriter strips the noise prefix, the selector
keeps supporting docs, the generator answers gold exactly when the evidence
it needs is in front of it (multi-hop roots need every hop), and otherwise
returns the question's designated distractor. With no documents at all the
generator answers single-hop kinds correctly from memory and multi-hop kinds
wrongly, which is what makes retrieval and decomposition worth paying for.

Scripted completions report synthetic token usage chosen so that pricing
them at SCRIPTED_PRICE reproduces the nominal per-executor USD costs in the
reward table exactly.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .corpus import Document
from .gateway import ChatMessage, ChatReply, ModelPrice, PricingTable, TokenUsage
from .reward import DEFAULT_COSTS
from .workflow import ExecutorId

NOISE_PREFIX = "Please kindly tell me right away: "

SCRIPTED_MODEL = "scripted"
SCRIPTED_PRICE = ModelPrice(input_usd_per_token=1e-8, output_usd_per_token=1e-8)

# prompt_tokens per executor such that tokens * 1e-8 == nominal USD, exactly
SCRIPTED_PROMPT_TOKENS: dict[ExecutorId, int] = {
    executor: round(cost / SCRIPTED_PRICE.input_usd_per_token)
    for executor, cost in DEFAULT_COSTS.per_executor.items()
}

_RESERVED = {
    "what", "is", "the", "color", "of", "who", "mentor", "owner", "which",
    "has", "a", "higher", "rating", "or", "material", "please", "kindly",
    "tell", "me", "right", "away", "known", "facts", "this", "hobby", "an",
}


class QuestionKind(str, Enum):
    SINGLE_HOP = "single_hop"
    NOISY_SINGLE_HOP = "noisy_single_hop"
    SERIAL_2HOP = "serial_2hop"
    PARALLEL_COMPARE = "parallel_compare"


MULTI_HOP_KINDS = {QuestionKind.SERIAL_2HOP, QuestionKind.PARALLEL_COMPARE}


@dataclass(frozen=True)
class Fact:
    subject: str
    relation: str
    obj: str

    def sentence(self) -> str:
        return f"The {self.relation} of {self.subject} is {self.obj}."


@dataclass(frozen=True)
class SynthQuestion:
    kind: QuestionKind
    text: str
    clean_text: str  # equals text except for the noisy kind
    golds: tuple[str, ...]
    support: tuple[Fact, ...]
    sub_questions: tuple[str, ...]
    slot_facts: tuple[Fact, ...]
    slot_distractors: tuple[str, ...]
    root_distractor: str
    compare_pair: tuple[str, str] | None = None


@dataclass
class SynthWorld:
    seed: int
    facts: list[Fact]
    documents: list[Document]
    questions: list[SynthQuestion]
    fallback_distractors: dict[str, str]

    def dataset_records(self) -> list[dict]:
        return [{"question": q.text, "golden_answers": list(q.golds)} for q in self.questions]

    def questions_of_kind(self, kind: QuestionKind) -> list[SynthQuestion]:
        return [q for q in self.questions if q.kind is kind]

    def to_json(self) -> str:
        fact_index = {fact: i for i, fact in enumerate(self.facts)}
        payload = {
            "seed": self.seed,
            "facts": [[f.subject, f.relation, f.obj] for f in self.facts],
            "documents": [
                {"id": d.doc_id, "title": d.title, "text": d.text} for d in self.documents
            ],
            "fallback_distractors": self.fallback_distractors,
            "questions": [
                {
                    "kind": q.kind.value,
                    "text": q.text,
                    "clean_text": q.clean_text,
                    "golds": list(q.golds),
                    "support": [fact_index[f] for f in q.support],
                    "sub_questions": list(q.sub_questions),
                    "slot_facts": [fact_index[f] for f in q.slot_facts],
                    "slot_distractors": list(q.slot_distractors),
                    "root_distractor": q.root_distractor,
                    "compare_pair": list(q.compare_pair) if q.compare_pair else None,
                }
                for q in self.questions
            ],
        }
        return json.dumps(payload, indent=2)

    @staticmethod
    def from_json(text: str) -> "SynthWorld":
        payload = json.loads(text)
        facts = [Fact(*triple) for triple in payload["facts"]]
        questions = [
            SynthQuestion(
                kind=QuestionKind(rec["kind"]),
                text=rec["text"],
                clean_text=rec["clean_text"],
                golds=tuple(rec["golds"]),
                support=tuple(facts[i] for i in rec["support"]),
                sub_questions=tuple(rec["sub_questions"]),
                slot_facts=tuple(facts[i] for i in rec["slot_facts"]),
                slot_distractors=tuple(rec["slot_distractors"]),
                root_distractor=rec["root_distractor"],
                compare_pair=tuple(rec["compare_pair"]) if rec["compare_pair"] else None,
            )
            for rec in payload["questions"]
        ]
        return SynthWorld(
            seed=payload["seed"],
            facts=facts,
            documents=[
                Document(doc_id=d["id"], title=d["title"], text=d["text"])
                for d in payload["documents"]
            ],
            questions=questions,
            fallback_distractors=dict(payload["fallback_distractors"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "SynthWorld":
        return SynthWorld.from_json(Path(path).read_text(encoding="utf-8"))


def _name_maker(rng: random.Random):
    consonants = "bdfglmnprstvz"
    vowels = "aeiou"
    used: set[str] = set(_RESERVED)

    def make() -> str:
        while True:
            n_syll = rng.choice((2, 3))
            name = "".join(rng.choice(consonants) + rng.choice(vowels) for _ in range(n_syll))
            if name not in used:
                used.add(name)
                return name

    return make


def _pick_other(rng: random.Random, pool: list[str], avoid: str) -> str:
    options = [v for v in pool if v != avoid]
    return rng.choice(options)


def generate_world(
    seed: int,
    n_entities: int = 10,
    n_filler_docs: int = 10,
    n_questions_per_kind: int = 10,
) -> SynthWorld:
    """Build a world. Question texts are unique, so the per-kind count is
    capped by the entity count (and by available pairs for comparisons)."""
    if n_entities < 2:
        raise ValueError("need at least 2 entities")
    if n_questions_per_kind < 1:
        raise ValueError("need at least 1 question per kind")
    if n_questions_per_kind > n_entities:
        raise ValueError("n_questions_per_kind cannot exceed n_entities")

    rng = random.Random(seed)
    fresh = _name_maker(rng)

    entities = [fresh() for _ in range(n_entities)]
    bridges = [fresh() for _ in range(n_entities)]
    colors = [fresh() for _ in range(n_entities)]
    materials = [fresh() for _ in range(n_entities)]
    mentors = [fresh() for _ in range(n_entities)]
    ratings = [str(v) for v in rng.sample(range(10, 100), n_entities)]

    facts: list[Fact] = []
    color_of: dict[str, Fact] = {}
    material_of: dict[str, Fact] = {}
    rating_of: dict[str, Fact] = {}
    owner_of: dict[str, Fact] = {}
    mentor_of: dict[str, Fact] = {}
    for i, ent in enumerate(entities):
        color_of[ent] = Fact(ent, "color", colors[i])
        material_of[ent] = Fact(ent, "material", materials[i])
        rating_of[ent] = Fact(ent, "rating", ratings[i])
        owner_of[ent] = Fact(ent, "owner", bridges[i])
        facts.extend([color_of[ent], material_of[ent], rating_of[ent], owner_of[ent]])
    for i, bridge in enumerate(bridges):
        mentor_of[bridge] = Fact(bridge, "mentor", mentors[i])
        facts.append(mentor_of[bridge])

    # one unassigned value per relation, used when a scripted executor is
    # asked something it cannot resolve; never equals any gold
    fallback = {rel: fresh() for rel in ("color", "material", "mentor", "owner", "rating")}

    documents = [
        Document(doc_id=f"d{i:04d}", title=fact.subject, text=fact.sentence())
        for i, fact in enumerate(facts)
    ]
    for j in range(n_filler_docs):
        subject, value = fresh(), fresh()
        documents.append(
            Document(
                doc_id=f"d{len(facts) + j:04d}",
                title=subject,
                text=f"The hobby of {subject} is {value}.",
            )
        )

    questions: list[SynthQuestion] = []

    chosen = rng.sample(entities, n_questions_per_kind)
    for ent in chosen:
        fact = color_of[ent]
        text = f"What is the color of {ent}?"
        questions.append(
            SynthQuestion(
                kind=QuestionKind.SINGLE_HOP,
                text=text,
                clean_text=text,
                golds=(fact.obj,),
                support=(fact,),
                sub_questions=(text,),
                slot_facts=(fact,),
                slot_distractors=(_pick_other(rng, colors, fact.obj),),
                root_distractor=_pick_other(rng, colors, fact.obj),
            )
        )

    chosen = rng.sample(entities, n_questions_per_kind)
    for ent in chosen:
        fact = material_of[ent]
        core = f"What is the material of {ent}?"
        questions.append(
            SynthQuestion(
                kind=QuestionKind.NOISY_SINGLE_HOP,
                text=NOISE_PREFIX + core,
                clean_text=core,
                golds=(fact.obj,),
                support=(fact,),
                sub_questions=(core,),
                slot_facts=(fact,),
                slot_distractors=(_pick_other(rng, materials, fact.obj),),
                root_distractor=_pick_other(rng, materials, fact.obj),
            )
        )

    chosen = rng.sample(entities, n_questions_per_kind)
    for ent in chosen:
        hop1 = owner_of[ent]
        bridge = hop1.obj
        hop2 = mentor_of[bridge]
        questions.append(
            SynthQuestion(
                kind=QuestionKind.SERIAL_2HOP,
                text=f"Who is the mentor of the owner of {ent}?",
                clean_text=f"Who is the mentor of the owner of {ent}?",
                golds=(hop2.obj,),
                support=(hop1, hop2),
                sub_questions=(f"Who is the owner of {ent}?", "Who is the mentor of this owner?"),
                slot_facts=(hop1, hop2),
                slot_distractors=(
                    _pick_other(rng, bridges, bridge),
                    _pick_other(rng, mentors, hop2.obj),
                ),
                root_distractor=_pick_other(rng, mentors, hop2.obj),
            )
        )

    used_pairs: set[tuple[str, str]] = set()
    for _ in range(n_questions_per_kind):
        while True:
            first, second = rng.sample(entities, 2)
            if (first, second) not in used_pairs:
                used_pairs.add((first, second))
                break
        fact1, fact2 = rating_of[first], rating_of[second]
        v1, v2 = int(fact1.obj), int(fact2.obj)
        winner, loser = (first, second) if v1 > v2 else (second, first)

        def flipping_distractor(own: str, other: int, own_wins: bool) -> str:
            # prefer a wrong value that also flips the comparison outcome
            flips = [
                r for r in ratings
                if r != own and ((int(r) < other) if own_wins else (int(r) > other))
            ]
            return rng.choice(flips) if flips else _pick_other(rng, ratings, own)

        questions.append(
            SynthQuestion(
                kind=QuestionKind.PARALLEL_COMPARE,
                text=f"Which has a higher rating, {first} or {second}?",
                clean_text=f"Which has a higher rating, {first} or {second}?",
                golds=(winner,),
                support=(fact1, fact2),
                sub_questions=(
                    f"What is the rating of {first}?",
                    f"What is the rating of {second}?",
                ),
                slot_facts=(fact1, fact2),
                slot_distractors=(
                    flipping_distractor(fact1.obj, v2, v1 > v2),
                    flipping_distractor(fact2.obj, v1, v2 > v1),
                ),
                root_distractor=loser,
                compare_pair=(first, second),
            )
        )

    return SynthWorld(
        seed=seed,
        facts=facts,
        documents=documents,
        questions=questions,
        fallback_distractors=fallback,
    )


# --- scripted backend -------------------------------------------------------

_DOC_LINE = re.compile(r"^Document(\d+): (.*)$")
_SUB_ANSWER = re.compile(r"^Sub-answer (\d+): (.*)$")

_QUESTION_PREFIXES = (
    "Original question is: ",
    "Original question is ",
    "Original Question:",
    "Question is: ",
)


@dataclass(frozen=True)
class _RootTarget:
    question: SynthQuestion


@dataclass(frozen=True)
class _SlotTarget:
    question: SynthQuestion
    slot: int


@dataclass(frozen=True)
class _ChainTarget:
    relation: str
    subject: str | None


class ScriptedBackendError(RuntimeError):
    pass


class ScriptedBackend:
    """Deterministic executor completions computed from the world.

    Prompts must have been rendered by this package's own templates; the
    backend re-parses them rather than receiving structured arguments, so a
    prompt regression breaks loudly here.
    """

    def __init__(self, world: SynthWorld):
        self.world = world
        self._by_root: dict[str, SynthQuestion] = {}
        self._by_sub: dict[str, tuple[SynthQuestion, int]] = {}
        self._chain_subq: dict[str, str] = {}
        for q in world.questions:
            self._by_root[q.text] = q
            self._by_root.setdefault(q.clean_text, q)
            for i, sub in enumerate(q.sub_questions):
                if sub == q.text:
                    continue
                if q.kind is QuestionKind.SERIAL_2HOP and i > 0:
                    # shared template text, resolvable only through known facts
                    self._chain_subq[sub] = q.slot_facts[i].relation
                else:
                    self._by_sub.setdefault(sub, (q, i))
        self._fact_by_key = {(f.subject, f.relation): f for f in world.facts}

    # - parsing helpers -

    @staticmethod
    def _first_user_content(messages: list[ChatMessage]) -> str:
        for message in messages:
            if message.role == "user":
                return message.content
        raise ScriptedBackendError("prompt has no user message")

    @staticmethod
    def _extract_question(content: str) -> str:
        for line in content.splitlines():
            for prefix in _QUESTION_PREFIXES:
                if line.startswith(prefix):
                    text = line[len(prefix):].strip()
                    if prefix.startswith("Original question is"):
                        text = text[:-1] if text.endswith(".") else text
                    return text.strip()
        raise ScriptedBackendError("prompt carries no question line")

    @staticmethod
    def _extract_doc_lines(content: str) -> list[str]:
        return [m.group(2) for line in content.splitlines() if (m := _DOC_LINE.match(line))]

    @staticmethod
    def _split_known(question: str) -> tuple[str, str | None]:
        if " Known facts: " not in question:
            return question, None
        core, rest = question.split(" Known facts: ", 1)
        known = rest.rstrip(".").strip()
        # later facts win; the chain subject is the most recent answer
        return core.strip(), (known.split("; ")[-1] if known else None)

    def _resolve(self, question: str) -> _RootTarget | _SlotTarget | _ChainTarget | None:
        core, known = self._split_known(question)
        if core in self._by_root:
            return _RootTarget(self._by_root[core])
        if core in self._by_sub:
            q, slot = self._by_sub[core]
            return _SlotTarget(q, slot)
        if core in self._chain_subq:
            return _ChainTarget(relation=self._chain_subq[core], subject=known)
        return None

    # - per-role behavior -

    def _reply(self, role: ExecutorId, text: str) -> ChatReply:
        usage = TokenUsage(SCRIPTED_PROMPT_TOKENS.get(role, 0), 0)
        return ChatReply(text=text, usage=usage)

    def complete(self, role: ExecutorId, messages: list[ChatMessage]) -> ChatReply:
        content = self._first_user_content(messages)
        if role in (ExecutorId.QDS, ExecutorId.QDP):
            return self._reply(role, self._decompose(content))
        if role is ExecutorId.QR:
            return self._reply(role, self._rewrite(content))
        if role is ExecutorId.DS:
            return self._reply(role, self._select(content))
        if role is ExecutorId.AG:
            return self._reply(role, f"**{self._answer(content)}**")
        if role is ExecutorId.AS:
            return self._reply(role, f"**{self._summarize(content)}**")
        raise ScriptedBackendError(f"scripted backend has no behavior for {role.value}")

    def _decompose(self, content: str) -> str:
        question = self._extract_question(content)
        target = self._resolve(question)
        if not isinstance(target, _RootTarget):
            raise ScriptedBackendError(f"cannot decompose unknown question {question!r}")
        return "\n".join(target.question.sub_questions)

    def _rewrite(self, content: str) -> str:
        question = self._extract_question(content)
        if question.startswith(NOISE_PREFIX):
            return question[len(NOISE_PREFIX):]
        return question

    def _select(self, content: str) -> str:
        question = self._extract_question(content)
        doc_lines = self._extract_doc_lines(content)
        target = self._resolve(question)
        support = self._support_sentences(target)
        kept = [
            i for i, line in enumerate(doc_lines)
            if any(sentence in line for sentence in support)
        ]
        if not kept:
            return "none"
        return ",".join(f"Document{i}" for i in kept)

    def _support_sentences(self, target) -> list[str]:
        if isinstance(target, _RootTarget):
            return [f.sentence() for f in target.question.support]
        if isinstance(target, _SlotTarget):
            return [target.question.slot_facts[target.slot].sentence()]
        if isinstance(target, _ChainTarget) and target.subject is not None:
            fact = self._fact_by_key.get((target.subject, target.relation))
            return [fact.sentence()] if fact else []
        return []

    def _answer(self, content: str) -> str:
        question = self._extract_question(content)
        doc_lines = self._extract_doc_lines(content)
        target = self._resolve(question)
        if target is None:
            raise ScriptedBackendError(f"cannot answer unknown question {question!r}")

        def visible(fact: Fact) -> bool:
            return any(fact.sentence() in line for line in doc_lines)

        if isinstance(target, _RootTarget):
            q = target.question
            if not doc_lines:
                # parametric memory: single-hop kinds known, multi-hop not
                return q.golds[0] if q.kind not in MULTI_HOP_KINDS else q.root_distractor
            if all(visible(f) for f in q.support):
                return q.golds[0]
            return q.root_distractor
        if isinstance(target, _SlotTarget):
            q, slot = target.question, target.slot
            fact = q.slot_facts[slot]
            if not doc_lines:
                return fact.obj if q.kind not in MULTI_HOP_KINDS else q.slot_distractors[slot]
            return fact.obj if visible(fact) else q.slot_distractors[slot]
        # chain target: subject came from known facts, if any
        fact = (
            self._fact_by_key.get((target.subject, target.relation))
            if target.subject is not None
            else None
        )
        if fact is not None and doc_lines and visible(fact):
            return fact.obj
        return self.world.fallback_distractors.get(target.relation, "unknown")

    def _summarize(self, content: str) -> str:
        question = self._extract_question(content)
        target = self._resolve(question)
        if not isinstance(target, _RootTarget):
            raise ScriptedBackendError(f"cannot summarize unknown question {question!r}")
        q = target.question
        answers = [
            m.group(2).strip()
            for line in content.splitlines()
            if (m := _SUB_ANSWER.match(line))
        ]
        if not answers:
            raise ScriptedBackendError("summarize prompt carries no sub-answers")
        if q.kind is QuestionKind.PARALLEL_COMPARE and q.compare_pair and len(answers) >= 2:
            try:
                v1, v2 = int(answers[0]), int(answers[1])
            except ValueError:
                return answers[-1]
            if v1 == v2:
                return answers[-1]
            return q.compare_pair[0] if v1 > v2 else q.compare_pair[1]
        return answers[-1]


def scripted_pricing_table() -> PricingTable:
    return PricingTable(prices={SCRIPTED_MODEL: SCRIPTED_PRICE})
