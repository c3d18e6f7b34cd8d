"""Shared fixtures and the canned backend used by executor and rollout tests."""

from __future__ import annotations

import pytest

from planrag.corpus import Document, build_index
from planrag.executors import ExecutorSuite
from planrag.gateway import ChatMessage, ChatReply, TokenUsage
from planrag.synthworld import ScriptedBackend, generate_world
from planrag.workflow import ExecutorId


class CannedBackend:
    """Replays fixed replies keyed on (executor, substring of the user messages).

    Rules are checked in order; the first match wins. Unmatched calls raise,
    so a test fails loudly when the orchestrator sends something unexpected.
    """

    def __init__(self, rules: list[tuple[ExecutorId, str, str]], usage: TokenUsage = TokenUsage(10, 5)):
        self.rules = rules
        self.usage = usage
        self.calls: list[tuple[ExecutorId, str]] = []

    def complete(self, role: ExecutorId, messages: list[ChatMessage]) -> ChatReply:
        user_text = "\n".join(m.content for m in messages if m.role == "user")
        self.calls.append((role, user_text))
        for rule_role, needle, reply in self.rules:
            if rule_role is role and needle in user_text:
                return ChatReply(text=reply, usage=self.usage)
        raise AssertionError(f"no canned reply for {role.value}: {user_text[:120]!r}")


@pytest.fixture(scope="session")
def world0():
    return generate_world(seed=0)


@pytest.fixture(scope="session")
def suite0(world0):
    return ExecutorSuite(
        backend=ScriptedBackend(world0), index=build_index(world0.documents), k=5
    )


@pytest.fixture()
def tiny_docs():
    return [
        Document("d1", "fruit", "apple banana apple"),
        Document("d2", "fruit", "banana cherry"),
        Document("d3", "fruit", "cherry apple"),
    ]


# --- canned end-to-end replay cases -----------------------------------------
#
# Four fixed rollouts over a small corpus, each pinning the expected plan
# sequence, turn count, retrieval count, and final answer. Used by the
# orchestrator tests and the acceptance suite.

REPLAY_DOCS = [
    Document(
        "jugantar",
        "Jugantar Patrika",
        "Jugantar Patrika was a Bengali revolutionary newspaper founded in 1906 "
        "by Barindra Kumar Ghosh, Abhinash Bhattacharya and Bhupendranath Dutt. "
        "The journal jugantor was published weekly during the swadeshi movement.",
    ),
    Document(
        "hefferline",
        "Ralph Hefferline",
        "Ralph Hefferline was a psychology professor at Columbia University.",
    ),
    Document(
        "coppe",
        "Coppe",
        "Coppe is a Japanese electronic musician who has collaborated with Wolf "
        "Alice. A live performance by the four piece band Wolf Alice typically "
        "uses four instruments.",
    ),
    Document("steel", "Steel", "Steel is an alloy of iron and carbon used in construction."),
    Document("jazz", "Jazz", "Jazz is a music genre that originated in New Orleans."),
]

REPLAY_CASES = [
    {
        "name": "memory_only",
        "question": "Is aluminium a ferrous or non ferrous metal?",
        "plans": ["AG"],
        "rules": [(ExecutorId.AG, "aluminium", "**non ferrous metal**")],
        "answer": "non ferrous metal",
        "turns": 1,
        "retrievals": 0,
    },
    {
        "name": "retrieve_then_answer",
        "question": "Who was the editor of the journal jugantor published in the time of swadeshi movement?",
        "plans": ["RA, AG"],
        "rules": [(ExecutorId.AG, "jugantor", "**Bhupendranath Dutt**")],
        "answer": "Bhupendranath Dutt",
        "turns": 1,
        "retrievals": 1,
    },
    {
        "name": "parallel_decompose",
        "question": "Which performance act has a higher instrument to person ratio, Badly Drawn Boy or Wolf Alice?",
        "plans": ["QDP", "AG", "AG", "AG", "RA, AG", "AS"],
        "rules": [
            (
                ExecutorId.QDP,
                "instrument to person ratio",
                "How many members are in the performance act Badly Drawn Boy?\n"
                "How many instruments are typically used in a performance by Badly Drawn Boy?\n"
                "How many members are in the performance act Wolf Alice?\n"
                "How many instruments are typically used in a performance by Wolf Alice?",
            ),
            (ExecutorId.AG, "members are in the performance act Badly Drawn Boy", "**One member**"),
            (
                ExecutorId.AG,
                "instruments are typically used in a performance by Badly Drawn Boy",
                "**Typically four instruments are used in a performance by Badly Drawn Boy.**",
            ),
            (ExecutorId.AG, "members are in the performance act Wolf Alice", "**Four**"),
            (
                ExecutorId.AG,
                "instruments are typically used in a performance by Wolf Alice",
                "**Four instruments**",
            ),
            (ExecutorId.AS, "instrument to person ratio", "**Badly Drawn Boy**"),
        ],
        "answer": "Badly Drawn Boy",
        "turns": 3,
        "retrievals": 1,
    },
    {
        "name": "serial_decompose",
        "question": "Ralph Hefferline was a psychology professor at a university that is located in what city?",
        "plans": ["QDS", "RA, AG", "AG", "AS"],
        "rules": [
            (
                ExecutorId.QDS,
                "Ralph Hefferline",
                "At which university was Ralph Hefferline a psychology professor?\n"
                "In what city is this university located?",
            ),
            (
                ExecutorId.AG,
                "At which university was Ralph Hefferline",
                "**Columbia University**",
            ),
            (ExecutorId.AG, "In what city is this university located", "**New York City**"),
            (ExecutorId.AS, "located in what city", "**New York City**"),
        ],
        "answer": "New York City",
        "turns": 4,
        "retrievals": 1,
    },
]


def replay_rollout(case: dict):
    from planrag.orchestrator import ScriptedPlanner, rollout

    backend = CannedBackend(case["rules"])
    suite = ExecutorSuite(backend=backend, index=build_index(REPLAY_DOCS), k=5)
    return rollout(case["question"], None, ScriptedPlanner(case["plans"]), suite)
