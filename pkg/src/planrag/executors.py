"""The seven executors and the prompt template machinery behind them.

Templates live as text assets under ``prompts/``. Each file is a sequence of
role sections introduced by ``[system]`` / ``[assistant]`` / ``[user]`` lines;
rendering substitutes the literal placeholders ``{content of Question}``,
``{content of Documents}`` and ``{content of Context}`` and nothing else.

Executor operations take a backend (anything with a ``complete`` method) and
return ``(value, TokenUsage)``. RA is the exception: it is a pure index
lookup, spends no tokens, and takes no backend.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Protocol

from .corpus import Document, Index
from .context import SubQuestionSlot, render_context_summary
from .gateway import ChatMessage, ChatReply, TokenUsage, ZERO_USAGE
from .workflow import ExecutorId

MAX_SUB_QUESTIONS = 4

_ROLE_HEADER = re.compile(r"^\[(system|assistant|user)\]\s*$")
_ANSWER_MARK = re.compile(r"\*\*(.+?)\*\*", re.DOTALL)
_DOC_TOKEN = re.compile(r"Document(\d+)")


class ExecutorError(RuntimeError):
    pass


class Backend(Protocol):
    def complete(self, role: ExecutorId, messages: list[ChatMessage]) -> ChatReply: ...


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    messages: tuple[tuple[str, str], ...]  # (role, content with placeholders)

    def render(self, question: str = "", documents: str = "", context: str = "") -> list[ChatMessage]:
        rendered = []
        for role, content in self.messages:
            filled = (
                content.replace("{content of Question}", question)
                .replace("{content of Documents}", documents)
                .replace("{content of Context}", context)
            )
            rendered.append(ChatMessage(role=role, content=filled))
        return rendered


def parse_template(name: str, text: str) -> PromptTemplate:
    messages: list[tuple[str, str]] = []
    role: str | None = None
    buf: list[str] = []

    def flush() -> None:
        if role is not None:
            messages.append((role, "\n".join(buf).strip()))

    for line in text.splitlines():
        match = _ROLE_HEADER.match(line)
        if match:
            flush()
            role = match.group(1)
            buf = []
        elif role is not None:
            buf.append(line)
        elif line.strip():
            raise ExecutorError(f"template {name}: content before first role header")
    flush()
    if not messages:
        raise ExecutorError(f"template {name}: no role sections")
    if messages[0][0] != "system":
        raise ExecutorError(f"template {name}: must start with a system section")
    return PromptTemplate(name=name, messages=tuple(messages))


_TEMPLATE_FILES = {
    ExecutorId.QDS: "qds.txt",
    ExecutorId.QDP: "qdp.txt",
    ExecutorId.QR: "qr.txt",
    ExecutorId.DS: "ds.txt",
    ExecutorId.AG: "ag.txt",
    ExecutorId.AS: "as.txt",
}

_cache: dict[str, PromptTemplate] = {}


def load_template(name: str) -> PromptTemplate:
    """Load a template asset by file stem ('qds', 'planner', ...)."""
    if name not in _cache:
        raw = resources.files("planrag.prompts").joinpath(f"{name}.txt").read_text("utf-8")
        _cache[name] = parse_template(name, raw)
    return _cache[name]


def template_for(executor: ExecutorId) -> PromptTemplate:
    if executor not in _TEMPLATE_FILES:
        raise ExecutorError(f"{executor.value} has no prompt template")
    return load_template(_TEMPLATE_FILES[executor][:-4])


def format_document_line(i: int, doc: Document) -> str:
    if doc.title:
        return f"Document{i}: {doc.title}. {doc.text}"
    return f"Document{i}: {doc.text}"


def render_documents(docs: list[Document]) -> str:
    if not docs:
        return "No documents."
    return "\n".join(format_document_line(i, doc) for i, doc in enumerate(docs))


def _lines_of(reply: str) -> list[str]:
    return [line.strip() for line in reply.splitlines() if line.strip()]


def decompose_serial(question: str, backend: Backend) -> tuple[list[str], TokenUsage]:
    """Split a question into ordered sub-questions, one per reply line."""
    messages = template_for(ExecutorId.QDS).render(question=question)
    reply = backend.complete(ExecutorId.QDS, messages)
    subs = _lines_of(reply.text)[:MAX_SUB_QUESTIONS]
    if not subs:
        raise ExecutorError("serial decomposition produced no sub-questions")
    return subs, reply.usage


def decompose_parallel(question: str, backend: Backend) -> tuple[list[str], TokenUsage]:
    messages = template_for(ExecutorId.QDP).render(question=question)
    reply = backend.complete(ExecutorId.QDP, messages)
    subs = _lines_of(reply.text)[:MAX_SUB_QUESTIONS]
    if not subs:
        raise ExecutorError("parallel decomposition produced no sub-questions")
    return subs, reply.usage


def rewrite_query(question: str, backend: Backend) -> tuple[str, TokenUsage]:
    """Rewrite to a concise query; falls back to the input when the reply
    is empty."""
    messages = template_for(ExecutorId.QR).render(question=question)
    reply = backend.complete(ExecutorId.QR, messages)
    cleaned = reply.text.strip().strip('"').strip("'").strip()
    if not cleaned:
        return question, reply.usage
    if "\n" in cleaned:
        cleaned = _lines_of(cleaned)[0]
    return cleaned, reply.usage


def retrieve(query: str, index: Index, k: int) -> list[Document]:
    """Top-k lexical retrieval. No backend, no token usage."""
    return [hit.doc for hit in index.search(query, k)]


def select_documents(question: str, docs: list[Document], backend: Backend) -> tuple[list[Document], TokenUsage]:
    """Keep the documents the backend marks helpful.

    The reply is scanned for Document<j> tokens; out-of-range ids are
    dropped, duplicates collapse. A reply of "none" is an explicit empty
    selection. Anything without Document tokens fails open: the input list
    is returned unchanged, since destroying recall on a malformed reply is
    worse than skipping the filter.
    """
    if not docs:
        raise ValueError("select_documents needs a non-empty document list")
    messages = template_for(ExecutorId.DS).render(question=question, documents=render_documents(docs))
    reply = backend.complete(ExecutorId.DS, messages)
    ids = [int(m) for m in _DOC_TOKEN.findall(reply.text)]
    if not ids:
        if reply.text.strip().lower() == "none":
            return [], reply.usage
        return list(docs), reply.usage
    seen: set[int] = set()
    kept = []
    for i in ids:
        if 0 <= i < len(docs) and i not in seen:
            seen.add(i)
            kept.append(docs[i])
    return kept, reply.usage


def generate_answer(question: str, docs: list[Document], backend: Backend) -> tuple[str, TokenUsage]:
    """Answer from the working query and documents.

    The reply is expected in **answer** form; without the markers the whole
    reply is taken verbatim. An empty reply is an executor failure.
    """
    messages = template_for(ExecutorId.AG).render(question=question, documents=render_documents(docs))
    reply = backend.complete(ExecutorId.AG, messages)
    text = reply.text.strip()
    if not text:
        raise ExecutorError("answer generator returned an empty reply")
    match = _ANSWER_MARK.search(text)
    answer = match.group(1).strip() if match else text
    if not answer:
        raise ExecutorError("answer generator returned empty answer markers")
    return answer, reply.usage


def summarize(question: str, slots: list[SubQuestionSlot], backend: Backend) -> tuple[str, TokenUsage]:
    """Compose the final answer from answered sub-question slots."""
    if not slots:
        raise ValueError("summarize requires at least one slot")
    if any(slot.answer is None for slot in slots):
        raise ValueError("summarize requires every slot to be answered")
    lines: list[str] = []
    for i, slot in enumerate(slots, start=1):
        lines.append(f"Sub-question {i}: {slot.text}")
        lines.append(f"Sub-answer {i}: {slot.answer}")
    messages = template_for(ExecutorId.AS).render(question=question, context="\n".join(lines))
    reply = backend.complete(ExecutorId.AS, messages)
    text = reply.text.strip()
    if not text:
        raise ExecutorError("summarizer returned an empty reply")
    match = _ANSWER_MARK.search(text)
    return (match.group(1).strip() if match else text), reply.usage


@dataclass
class ExecutorSuite:
    """Bundles what a rollout needs to run plans: a backend, an index, k."""

    backend: Backend
    index: Index
    k: int = 5


class GatewayBackend:
    """Adapts a ChatClient to the Backend protocol."""

    def __init__(self, client) -> None:
        self._client = client

    def complete(self, role: ExecutorId, messages: list[ChatMessage]) -> ChatReply:
        return self._client.chat(messages)


# keep render_context_summary importable next to the executors that need it
__all__ = [
    "Backend",
    "ExecutorError",
    "ExecutorSuite",
    "GatewayBackend",
    "PromptTemplate",
    "decompose_parallel",
    "decompose_serial",
    "format_document_line",
    "generate_answer",
    "load_template",
    "parse_template",
    "render_context_summary",
    "render_documents",
    "retrieve",
    "rewrite_query",
    "select_documents",
    "summarize",
    "template_for",
]
