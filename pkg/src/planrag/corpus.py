"""Lexical document index with BM25 ranking.

Documents are (id, title, text) records, typically ingested from a JSONL
file with exactly those keys. Tokenization lowercases and keeps maximal
alphanumeric runs; scoring is Okapi BM25 with

    idf(t) = ln((N - n_t + 0.5) / (n_t + 0.5) + 1)

which is strictly positive, so scores of matching docs are >= 0. Ties are
broken by ascending document id so that search results are reproducible
across runs and platforms.
"""

from __future__ import annotations

import json
import math
import pickle
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

_TOKEN_RE = re.compile(r"[0-9a-z]+")

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class ScoredHit:
    doc: Document
    score: float


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Index:
    """Immutable once built; safe to share across threads."""

    docs: tuple[Document, ...]
    postings: dict[str, list[tuple[int, int]]]  # term -> [(doc ordinal, tf)]
    doc_lengths: tuple[int, ...]
    avg_doc_length: float
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    @property
    def doc_count(self) -> int:
        return len(self.docs)

    def idf(self, term: str) -> float:
        n = len(self.postings.get(term, ()))
        big_n = self.doc_count
        return math.log((big_n - n + 0.5) / (n + 0.5) + 1.0)

    def search(self, query: str, k: int) -> list[ScoredHit]:
        """Top-k documents by BM25 score; ties broken by ascending doc id.

        Documents with zero overlap with the query are never returned, so
        fewer than k hits is a normal outcome.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        terms = tokenize(query)
        if not terms:
            return []
        scores: dict[int, float] = {}
        # repeated query terms contribute once per occurrence
        for term, qtf in Counter(terms).items():
            posting = self.postings.get(term)
            if not posting:
                continue
            idf = self.idf(term)
            for ordinal, tf in posting:
                norm = self.k1 * (1.0 - self.b + self.b * self.doc_lengths[ordinal] / self.avg_doc_length)
                scores[ordinal] = scores.get(ordinal, 0.0) + qtf * idf * (tf * (self.k1 + 1.0)) / (tf + norm)
        ranked = sorted(scores.items(), key=lambda item: (-item[1], self.docs[item[0]].doc_id))
        return [ScoredHit(doc=self.docs[ordinal], score=score) for ordinal, score in ranked[:k]]

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            pickle.dump(self, fh)

    @staticmethod
    def load(path: str | Path) -> "Index":
        with open(path, "rb") as fh:
            index = pickle.load(fh)
        if not isinstance(index, Index):
            raise CorpusError(f"{path} does not contain an index snapshot")
        return index


def build_index(docs: list[Document] | tuple[Document, ...], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Index:
    if not docs:
        raise CorpusError("empty corpus")
    seen: set[str] = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise CorpusError(f"duplicate doc id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        if not doc.text:
            raise CorpusError(f"doc {doc.doc_id!r} has empty text")
    postings: dict[str, list[tuple[int, int]]] = {}
    lengths: list[int] = []
    for ordinal, doc in enumerate(docs):
        tokens = tokenize(doc.title + " " + doc.text)
        lengths.append(len(tokens))
        for term, tf in sorted(Counter(tokens).items()):
            postings.setdefault(term, []).append((ordinal, tf))
    avg = sum(lengths) / len(lengths)
    return Index(
        docs=tuple(docs),
        postings=postings,
        doc_lengths=tuple(lengths),
        avg_doc_length=avg,
        k1=k1,
        b=b,
    )


def load_corpus_jsonl(path: str | Path) -> list[Document]:
    """Read a JSONL corpus; every line must carry id, title, text."""
    docs: list[Document] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusError(f"line {lineno}: invalid JSON ({err.msg})") from err
            if not isinstance(record, dict):
                raise CorpusError(f"line {lineno}: expected an object")
            missing = [key for key in ("id", "title", "text") if key not in record]
            if missing:
                raise CorpusError(f"line {lineno}: missing field(s) {', '.join(missing)}")
            docs.append(Document(doc_id=str(record["id"]), title=str(record["title"]), text=str(record["text"])))
    if not docs:
        raise CorpusError(f"{path}: no documents")
    return docs
