"""Shared domain types, impact quantization, and the ground-truth scoring function.

Everything here is immutable after construction and safe to share across
threads. Search-time scoring is integer-only: raw float weights exist only
before quantization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping


def round_half_away(x: float) -> int:
    """Round to the nearest integer, halves away from zero.

    Python's built-in round() uses banker's rounding; all quantization in
    this package needs half-away-from-zero so results are bit-exact and
    reproducible across languages.
    """
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


@dataclass(frozen=True)
class QuantConfig:
    """Quantization parameters shared by an index and its queries.

    Attributes:
        bits: impact bit width, 1..32 (default 8).
        global_max: maximum raw weight over the collection; the top of the
            quantization range.
        query_scale: integer multiplier applied to raw query weights.
    """

    bits: int = 8
    global_max: float = 1.0
    query_scale: int = 100

    def __post_init__(self):
        if not 1 <= self.bits <= 32:
            raise ValueError(f"bits must be in [1, 32], got {self.bits}")
        if not self.global_max > 0:
            raise ValueError(f"global_max must be positive, got {self.global_max}")
        if self.query_scale < 1:
            raise ValueError(f"query_scale must be >= 1, got {self.query_scale}")

    @property
    def levels(self) -> int:
        """Top of the quantized range: 2^bits - 1."""
        return (1 << self.bits) - 1


@dataclass(frozen=True)
class ImpactVector:
    """A document as a sparse term -> weight map.

    Entries are (term_id, weight) pairs sorted by term id, weights strictly
    positive, no duplicate term ids. Weights are raw floats before index
    quantization and small positive integers after.
    """

    doc_id: str
    entries: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        prev = -1
        for tid, w in self.entries:
            if tid <= prev:
                raise ValueError(
                    f"doc {self.doc_id!r}: entries must have strictly "
                    f"ascending term ids (term {tid} after {prev})"
                )
            if not w > 0:
                raise ValueError(f"doc {self.doc_id!r}: weight for term {tid} must be > 0")
            prev = tid

    @classmethod
    def from_map(cls, doc_id: str, weights: Mapping[int, float]) -> "ImpactVector":
        """Build from an unordered term -> weight mapping."""
        return cls(doc_id, tuple(sorted(weights.items())))

    def to_map(self) -> dict[int, float]:
        return dict(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ForwardIndex:
    """A collection of documents in forward (document-major) form.

    This is the unit document-centric pruning acts on, before inversion.
    ``expanded`` optionally flags, per document, which term ids came from
    document expansion; only the dual-threshold pruner consumes it.
    """

    docs: tuple[ImpactVector, ...]
    expanded: Mapping[str, frozenset[int]] | None = None

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)


@dataclass(frozen=True)
class WeightedQuery:
    """A query as integer-weighted term ids, sorted by term id."""

    query_id: str
    entries: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        prev = -1
        for tid, w in self.entries:
            if tid <= prev:
                raise ValueError(
                    f"query {self.query_id!r}: entries must have strictly "
                    f"ascending term ids"
                )
            if w < 1:
                raise ValueError(f"query {self.query_id!r}: weights must be positive integers")
            prev = tid

    def __len__(self) -> int:
        return len(self.entries)


def quantize_impact(w: float, cfg: QuantConfig) -> int:
    """Quantize one raw weight to an integer impact in [1, 2^bits - 1].

    The floor of 1 guarantees that no stored posting quantizes to zero, so
    posting presence always means a score contribution. Monotone
    non-decreasing in ``w``.
    """
    if not w > 0:
        raise ValueError(f"weight must be positive, got {w}")
    if w > cfg.global_max:
        raise ValueError(f"weight {w} exceeds global_max {cfg.global_max}")
    return max(1, round_half_away(w / cfg.global_max * cfg.levels))


def scale_query(query_id: str, raw: Iterable[tuple[int, float]], cfg: QuantConfig) -> WeightedQuery:
    """Convert raw float query weights to integers via cfg.query_scale.

    Weights are rounded half away from zero; entries rounding to zero are
    dropped. Output entries are sorted by term id.
    """
    scaled: dict[int, int] = {}
    for tid, w in raw:
        if w < 0:
            raise ValueError(f"query {query_id!r}: raw weights must be >= 0")
        q = round_half_away(w * cfg.query_scale)
        if q > 0:
            scaled[tid] = scaled.get(tid, 0) + q
    return WeightedQuery(query_id, tuple(sorted(scaled.items())))


def score_doc(q: WeightedQuery, d: ImpactVector) -> int:
    """Exact integer score: sum of query weight times impact over shared terms.

    Both inputs are sorted by term id, so this is a linear merge. The
    document must hold quantized (integer) impacts; the result fits a 64-bit
    accumulator for any bits <= 32 and realistic query sizes.
    """
    score = 0
    qe, de = q.entries, d.entries
    i = j = 0
    while i < len(qe) and j < len(de):
        qt, dt = qe[i][0], de[j][0]
        if qt == dt:
            score += qe[i][1] * int(de[j][1])
            i += 1
            j += 1
        elif qt < dt:
            i += 1
        else:
            j += 1
    return score
