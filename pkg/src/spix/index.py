"""Inverted index construction, quantization, statistics, and the SPIX binary format.

A built index starts out with raw float impacts; ``quantize_index`` maps
them to small integers once pruning is done. Only quantized indexes can be
serialized. Quantized indexes are immutable and safe to share read-only.

SPIX file layout (all integers little-endian):

    magic "SPIX" | version u32 | bits u32 | query_scale u32 | global_max f64
    doc table:  count u32, then per doc: LEB128 byte length + UTF-8 id
    vocabulary: count u32, then per term: LEB128 byte length + UTF-8 term
    postings, in term-id order: LEB128 list length, LEB128 doc gaps
        (first value is the doc number itself), impacts packed as u8
        (bits <= 8), u16 (bits <= 16) or u32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import IO, Iterable

import numpy as np

from .core import ForwardIndex, ImpactVector, QuantConfig
from .ingest import VocabMap

MAGIC = b"SPIX"
FORMAT_VERSION = 1


class IndexFormatError(ValueError):
    """Raised when bytes presented as a SPIX file cannot be decoded."""


@dataclass
class PostingList:
    """Per-term postings: parallel doc-number and impact arrays.

    ``doc_ids`` are strictly ascending internal document numbers. Impacts
    are float64 before quantization and int64 after. ``max_impact`` is the
    maximum impact, 0 for an empty list.
    """

    term: int
    doc_ids: np.ndarray
    impacts: np.ndarray
    max_impact: float

    def __len__(self) -> int:
        return len(self.doc_ids)

    @classmethod
    def build(cls, term: int, doc_ids: np.ndarray, impacts: np.ndarray) -> "PostingList":
        max_impact = impacts.max() if len(impacts) else 0
        return cls(term, doc_ids, impacts, max_impact)


@dataclass
class InvertedIndex:
    """A full inverted index over one document collection.

    ``lists[t]`` holds the postings of term id ``t`` (possibly empty).
    ``doc_table[n]`` maps internal doc number ``n`` back to the external id;
    numbers are assigned in collection input order.
    """

    vocab: VocabMap
    lists: list[PostingList]
    doc_table: list[str]
    quant: QuantConfig
    quantized: bool = False

    @property
    def num_docs(self) -> int:
        return len(self.doc_table)

    @property
    def num_terms(self) -> int:
        return len(self.lists)

    def forward(self) -> ForwardIndex:
        """Reconstruct the forward representation (inversion is lossless)."""
        per_doc: list[dict[int, float]] = [dict() for _ in self.doc_table]
        for pl in self.lists:
            for n, w in zip(pl.doc_ids.tolist(), pl.impacts.tolist()):
                per_doc[n][pl.term] = w
        docs = tuple(
            ImpactVector.from_map(doc_id, weights)
            for doc_id, weights in zip(self.doc_table, per_doc)
        )
        return ForwardIndex(docs)


@dataclass(frozen=True)
class IndexStats:
    """Size and shape counters for one index."""

    num_docs: int
    num_terms: int
    num_postings: int
    max_list_len: int
    serialized_bytes: int
    num_empty_lists: int = 0
    num_empty_docs: int = 0


def build_index(fwd: ForwardIndex, cfg: QuantConfig, vocab: VocabMap | None = None) -> InvertedIndex:
    """Invert a forward index into per-term posting lists (raw floats).

    Doc numbers are assigned in input order; lists come out sorted by doc
    number because input order is preserved through a stable sort by term.
    When no vocabulary is given a positional placeholder one is created,
    which is enough for search and serialization but not for mapping real
    query terms.

    Raises:
        ValueError: on a duplicate external doc id, or a term id outside
            the given vocabulary.
    """
    doc_table: list[str] = []
    seen: set[str] = set()
    tids: list[int] = []
    docnums: list[int] = []
    weights: list[float] = []
    for n, doc in enumerate(fwd):
        if doc.doc_id in seen:
            raise ValueError(f"duplicate doc id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        doc_table.append(doc.doc_id)
        for tid, w in doc.entries:
            tids.append(tid)
            docnums.append(n)
            weights.append(w)

    max_tid = max(tids) if tids else -1
    if vocab is None:
        vocab = VocabMap(f"#{t}" for t in range(max_tid + 1))
    elif max_tid >= len(vocab):
        raise ValueError(f"term id {max_tid} outside vocabulary of size {len(vocab)}")
    num_terms = len(vocab)

    tid_arr = np.asarray(tids, dtype=np.int64)
    doc_arr = np.asarray(docnums, dtype=np.int64)
    w_arr = np.asarray(weights, dtype=np.float64)
    order = np.argsort(tid_arr, kind="stable")
    tid_arr, doc_arr, w_arr = tid_arr[order], doc_arr[order], w_arr[order]

    lists: list[PostingList] = []
    bounds = np.searchsorted(tid_arr, np.arange(num_terms + 1))
    for t in range(num_terms):
        lo, hi = bounds[t], bounds[t + 1]
        lists.append(PostingList.build(t, doc_arr[lo:hi].copy(), w_arr[lo:hi].copy()))
    return InvertedIndex(vocab, lists, doc_table, cfg, quantized=False)


def collection_max_weight(index: InvertedIndex) -> float:
    maxima = [pl.max_impact for pl in index.lists if len(pl)]
    return max(maxima) if maxima else 0.0


def quantize_index(index: InvertedIndex) -> InvertedIndex:
    """Map raw float impacts to integers in [1, 2^bits - 1].

    The quantization ceiling (``global_max``) is the collection maximum,
    recorded in the returned index's QuantConfig. Per-list maxima are
    recomputed. Quantizing twice is an error.
    """
    if index.quantized:
        raise ValueError("index is already quantized")
    gmax = collection_max_weight(index)
    cfg = replace(index.quant, global_max=gmax) if gmax > 0 else index.quant
    levels = cfg.levels
    lists = []
    for pl in index.lists:
        if len(pl) == 0:
            lists.append(PostingList.build(pl.term, pl.doc_ids, np.empty(0, dtype=np.int64)))
            continue
        q = np.floor(pl.impacts / cfg.global_max * levels + 0.5).astype(np.int64)
        np.maximum(q, 1, out=q)
        lists.append(PostingList.build(pl.term, pl.doc_ids, q))
    return InvertedIndex(index.vocab, lists, list(index.doc_table), cfg, quantized=True)


def _leb128_encode(values: Iterable[int], out: bytearray) -> None:
    for v in values:
        v = int(v)
        if v < 0:
            raise ValueError("LEB128 encodes non-negative integers only")
        while v >= 0x80:
            out.append((v & 0x7F) | 0x80)
            v >>= 7
        out.append(v)


class _Reader:
    """Cursor over loaded bytes with structured EOF errors."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexFormatError("truncated index file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def varint(self) -> int:
        result = 0
        shift = 0
        while True:
            if self.pos >= len(self.data):
                raise IndexFormatError("truncated index file (inside varint)")
            b = self.data[self.pos]
            self.pos += 1
            result |= (b & 0x7F) << shift
            if not b & 0x80:
                return result
            shift += 7
            if shift > 63:
                raise IndexFormatError("varint too long")

    def string(self) -> str:
        n = self.varint()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise IndexFormatError("invalid UTF-8 in string table") from e


def _impact_width(bits: int) -> int:
    if bits <= 8:
        return 1
    if bits <= 16:
        return 2
    return 4


def dumps_index(index: InvertedIndex) -> bytes:
    """Serialize a quantized index to SPIX bytes (deterministic)."""
    if not index.quantized:
        raise ValueError("only quantized indexes can be serialized")
    cfg = index.quant
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<I", cfg.bits)
    out += struct.pack("<I", cfg.query_scale)
    out += struct.pack("<d", cfg.global_max)

    out += struct.pack("<I", len(index.doc_table))
    for doc_id in index.doc_table:
        raw = doc_id.encode("utf-8")
        _leb128_encode([len(raw)], out)
        out += raw

    terms = index.vocab.terms()
    if len(terms) != len(index.lists):
        raise ValueError("vocab size does not match posting list count")
    out += struct.pack("<I", len(terms))
    for term in terms:
        raw = term.encode("utf-8")
        _leb128_encode([len(raw)], out)
        out += raw

    width = _impact_width(cfg.bits)
    dtype = {1: "<u1", 2: "<u2", 4: "<u4"}[width]
    for pl in index.lists:
        _leb128_encode([len(pl)], out)
        if len(pl):
            gaps = np.diff(pl.doc_ids, prepend=0)
            gaps[0] = pl.doc_ids[0]
            _leb128_encode(gaps.tolist(), out)
            out += pl.impacts.astype(dtype).tobytes()
    return bytes(out)


def loads_index(data: bytes) -> InvertedIndex:
    """Deserialize SPIX bytes; inverse of ``dumps_index``."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise IndexFormatError("not an index file (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported index format version {version}")
    bits = r.u32()
    query_scale = r.u32()
    global_max = r.f64()
    try:
        cfg = QuantConfig(bits=bits, global_max=global_max, query_scale=query_scale)
    except ValueError as e:
        raise IndexFormatError(f"invalid quantization header: {e}") from e

    doc_table = [r.string() for _ in range(r.u32())]
    vocab = VocabMap(r.string() for _ in range(r.u32()))

    width = _impact_width(bits)
    dtype = {1: "<u1", 2: "<u2", 4: "<u4"}[width]
    lists: list[PostingList] = []
    for t in range(len(vocab)):
        n = r.varint()
        if n == 0:
            lists.append(
                PostingList.build(t, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
            )
            continue
        gaps = np.empty(n, dtype=np.int64)
        for i in range(n):
            gaps[i] = r.varint()
        doc_ids = np.cumsum(gaps)
        impacts = np.frombuffer(r.take(n * width), dtype=dtype).astype(np.int64)
        if doc_ids[-1] >= len(doc_table):
            raise IndexFormatError(f"term {t}: doc number beyond doc table")
        lists.append(PostingList.build(t, doc_ids, impacts))
    if r.pos != len(data):
        raise IndexFormatError("trailing bytes after index payload")
    return InvertedIndex(vocab, lists, doc_table, cfg, quantized=True)


def save_index(index: InvertedIndex, sink: IO[bytes] | str) -> int:
    """Write a quantized index; returns the byte count."""
    data = dumps_index(index)
    if isinstance(sink, str):
        with open(sink, "wb") as f:
            f.write(data)
    else:
        sink.write(data)
    return len(data)


def load_index(source: IO[bytes] | str) -> InvertedIndex:
    if isinstance(source, str):
        with open(source, "rb") as f:
            data = f.read()
    else:
        data = source.read()
    return loads_index(data)


def index_stats(index: InvertedIndex) -> IndexStats:
    """Exact counters plus the actual serialized size.

    For an unquantized index the size is measured on a quantized copy
    (byte count does not depend on the impact values, only on structure
    and bit width).
    """
    lens = [len(pl) for pl in index.lists]
    num_postings = int(sum(lens))
    per_doc = np.zeros(index.num_docs, dtype=np.int64)
    for pl in index.lists:
        per_doc[pl.doc_ids] += 1
    serializable = index if index.quantized else quantize_index(index)
    return IndexStats(
        num_docs=index.num_docs,
        num_terms=index.num_terms,
        num_postings=num_postings,
        max_list_len=max(lens) if lens else 0,
        serialized_bytes=len(dumps_index(serializable)),
        num_empty_lists=sum(1 for n in lens if n == 0),
        num_empty_docs=int((per_doc == 0).sum()) if index.num_docs else 0,
    )
