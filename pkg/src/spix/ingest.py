"""Parsers and writers for the external text formats.

Three formats cross the package boundary:

* JSONL vector files, one ``{"id": ..., "vector": {term: weight, ...}}``
  object per line, for collections and queries.
* TREC qrels: ``qid 0 docid grade`` lines.
* TREC run files: ``qid Q0 docid rank score tag`` lines, score printed with
  six decimal places.

An optional expansion sidecar (``{"id": ..., "expanded": [term, ...]}``
JSONL) marks which terms of a document came from expansion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .core import ForwardIndex, ImpactVector, QuantConfig, WeightedQuery, scale_query


class DataFormatError(ValueError):
    """An input file violates its declared format."""


class VocabMap:
    """Bijection between term strings and dense 0-based term ids.

    Ids are assigned in first-seen order and are stable for the lifetime of
    the map.
    """

    def __init__(self, terms: Iterable[str] = ()):
        self._id_of: dict[str, int] = {}
        self._term_of: list[str] = []
        for t in terms:
            self.add(t)

    def add(self, term: str) -> int:
        """Return the id for ``term``, registering it if unseen."""
        tid = self._id_of.get(term)
        if tid is None:
            tid = len(self._term_of)
            self._id_of[term] = tid
            self._term_of.append(term)
        return tid

    def id_of(self, term: str) -> int | None:
        return self._id_of.get(term)

    def term_of(self, tid: int) -> str:
        return self._term_of[tid]

    def terms(self) -> list[str]:
        return list(self._term_of)

    def __len__(self) -> int:
        return len(self._term_of)

    def __contains__(self, term: str) -> bool:
        return term in self._id_of


@dataclass
class IngestReport:
    """Counters from one parsing pass."""

    num_docs: int = 0
    dropped_nonpositive: int = 0
    duplicate_qrels: int = 0


def parse_vectors(
    lines: Iterable[str], vocab: VocabMap | None = None
) -> tuple[ForwardIndex, VocabMap, IngestReport]:
    """Parse a JSONL vector stream into a forward index.

    Weights <= 0 carry no posting and are dropped (counted in the report).
    Terms are registered in the vocabulary in first-seen order; document
    order follows the file.

    Raises:
        DataFormatError: on malformed JSON (naming the line number), a
            missing/invalid field, or a duplicate document id.
    """
    vocab = vocab if vocab is not None else VocabMap()
    report = IngestReport()
    docs: list[ImpactVector] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"line {lineno}: malformed JSON ({e.msg})") from e
        if not isinstance(obj, dict) or "id" not in obj or "vector" not in obj:
            raise DataFormatError(f'line {lineno}: expected object with "id" and "vector"')
        doc_id = obj["id"]
        vector = obj["vector"]
        if not isinstance(doc_id, str):
            raise DataFormatError(f'line {lineno}: "id" must be a string')
        if not isinstance(vector, dict):
            raise DataFormatError(f'line {lineno}: "vector" must be an object')
        if doc_id in seen:
            raise DataFormatError(f"line {lineno}: duplicate doc id {doc_id!r}")
        seen.add(doc_id)
        weights: dict[int, float] = {}
        for term, w in vector.items():
            if not isinstance(w, (int, float)) or isinstance(w, bool):
                raise DataFormatError(f"line {lineno}: weight for {term!r} is not a number")
            if w <= 0:
                report.dropped_nonpositive += 1
                continue
            weights[vocab.add(term)] = float(w)
        docs.append(ImpactVector.from_map(doc_id, weights))
        report.num_docs += 1
    return ForwardIndex(tuple(docs)), vocab, report


def write_vectors(fwd: ForwardIndex, vocab: VocabMap, out: IO[str]) -> None:
    """Emit a forward index back to the JSONL vector format."""
    for doc in fwd:
        vector = {vocab.term_of(tid): w for tid, w in doc.entries}
        out.write(json.dumps({"id": doc.doc_id, "vector": vector}) + "\n")


def parse_expansion_sidecar(lines: Iterable[str], vocab: VocabMap) -> dict[str, frozenset[int]]:
    """Parse the expansion sidecar into per-document expanded term-id sets.

    Sidecar terms missing from the vocabulary are ignored: they carry no
    posting, so there is nothing to prune.
    """
    expanded: dict[str, frozenset[int]] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"sidecar line {lineno}: malformed JSON ({e.msg})") from e
        if not isinstance(obj, dict) or "id" not in obj or "expanded" not in obj:
            raise DataFormatError(f'sidecar line {lineno}: expected "id" and "expanded"')
        tids = set()
        for term in obj["expanded"]:
            tid = vocab.id_of(term)
            if tid is not None:
                tids.add(tid)
        expanded[obj["id"]] = frozenset(tids)
    return expanded


def parse_queries(
    lines: Iterable[str], vocab: VocabMap, cfg: QuantConfig
) -> list[WeightedQuery]:
    """Parse a JSONL query stream against an existing vocabulary.

    Query terms absent from the vocabulary are skipped; remaining weights
    are integer-scaled via ``scale_query``.
    """
    queries: list[WeightedQuery] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"line {lineno}: malformed JSON ({e.msg})") from e
        if not isinstance(obj, dict) or "id" not in obj or "vector" not in obj:
            raise DataFormatError(f'line {lineno}: expected object with "id" and "vector"')
        qid = obj["id"]
        if qid in seen:
            raise DataFormatError(f"line {lineno}: duplicate query id {qid!r}")
        seen.add(qid)
        raw = []
        for term, w in obj["vector"].items():
            tid = vocab.id_of(term)
            if tid is not None and w > 0:
                raw.append((tid, float(w)))
        queries.append(scale_query(qid, raw, cfg))
    return queries


class Qrels:
    """Graded relevance judgments: (query_id, doc_id) -> grade >= 0."""

    def __init__(self):
        self._grades: dict[str, dict[str, int]] = {}

    def set(self, query_id: str, doc_id: str, grade: int) -> None:
        if grade < 0:
            raise ValueError(f"grade must be >= 0, got {grade}")
        self._grades.setdefault(query_id, {})[doc_id] = grade

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._grades.get(query_id, {}).get(doc_id, 0)

    def for_query(self, query_id: str) -> dict[str, int]:
        return dict(self._grades.get(query_id, {}))

    def query_ids(self) -> list[str]:
        return list(self._grades)

    def __len__(self) -> int:
        return sum(len(v) for v in self._grades.values())

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._grades


def parse_qrels(lines: Iterable[str]) -> tuple[Qrels, int]:
    """Parse TREC qrels lines.

    Later duplicates of the same (query, doc) pair override earlier ones;
    the override count is returned alongside the qrels so callers can warn.
    """
    qrels = Qrels()
    overrides = 0
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise DataFormatError(f"qrels line {lineno}: expected 4 fields, got {len(parts)}")
        qid, _, doc_id, grade_s = parts
        try:
            grade = int(grade_s)
        except ValueError:
            raise DataFormatError(f"qrels line {lineno}: grade {grade_s!r} is not an integer")
        if grade < 0:
            raise DataFormatError(f"qrels line {lineno}: grade must be >= 0")
        if doc_id in qrels._grades.get(qid, {}):
            overrides += 1
        qrels.set(qid, doc_id, grade)
    return qrels, overrides


@dataclass
class Run:
    """Ranked retrieval results per query.

    ``entries[qid]`` is a list of (doc_id, score, rank) with contiguous
    1-based ranks and non-increasing scores. Queries retain insertion order.
    """

    entries: dict[str, list[tuple[str, float, int]]] = field(default_factory=dict)

    def add_query(self, query_id: str, ranked: Iterable[tuple[str, float]]) -> None:
        """Append one query's results in their given (already ranked) order."""
        self.entries[query_id] = [
            (doc_id, float(score), rank)
            for rank, (doc_id, score) in enumerate(ranked, start=1)
        ]

    def query_ids(self) -> list[str]:
        return list(self.entries)

    def ranked_docs(self, query_id: str) -> list[str]:
        return [doc_id for doc_id, _, _ in self.entries.get(query_id, [])]


def parse_run(lines: Iterable[str]) -> Run:
    """Parse a TREC run file, normalizing each query's ranking.

    Entries are re-sorted by (score desc, doc_id asc) and ranks rewritten
    from 1, so rankings read back are canonical regardless of how the file
    ordered them.
    """
    per_query: dict[str, list[tuple[str, float]]] = {}
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise DataFormatError(f"run line {lineno}: expected 6 fields, got {len(parts)}")
        qid, _, doc_id, rank_s, score_s, _tag = parts
        try:
            int(rank_s)
            score = float(score_s)
        except ValueError:
            raise DataFormatError(f"run line {lineno}: unparseable rank/score")
        per_query.setdefault(qid, []).append((doc_id, score))
    run = Run()
    for qid, docs in per_query.items():
        docs.sort(key=lambda e: (-e[1], e[0]))
        run.add_query(qid, docs)
    return run


def write_run(run: Run, tag: str, out: IO[str]) -> None:
    """Write a run in TREC format; queries with no results are omitted."""
    if not tag or any(c.isspace() for c in tag):
        raise ValueError(f"run tag must be non-empty and contain no whitespace: {tag!r}")
    for qid, entries in run.entries.items():
        for doc_id, score, rank in entries:
            out.write(f"{qid} Q0 {doc_id} {rank} {score:.6f} {tag}\n")
