"""Fault lookup table: offline build, ``.flut`` binary format, online queries.

The on-disk layout is little-endian::

    magic "FLUT" | version u16 | bucket_count u8 | reserved u8 | entry_count u32
    entry_count x (category_id u16, bucket u8, risk u8, n u32,
                   r2, rmse, mae, within_010, within_020 as float32)
    crc32 u32 over every preceding byte
"""

from __future__ import annotations

import bisect
import csv
import enum
import io
import math
import random
import struct
import time
import tracemalloc
import zlib
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ChecksumError, EmptyInput, LutFormatError, MagicError, TruncationError, VersionError
from .metrics import MetricsSummary
from .scenario import CATEGORIES, FaultCategory, category

try:
    from ._slots import SlotIndex
except ImportError:  # extension not compiled; pure-Python query is used
    SlotIndex = None

MAGIC = b"FLUT"
VERSION = 1
DEFAULT_BUCKETS = 10
HEADER = struct.Struct("<4sHBBI")
ENTRY = struct.Struct("<HBBI5f")
CRC = struct.Struct("<I")
FALLBACK_RADIUS = 1


class Risk(enum.IntEnum):
    NOMINAL = 0
    DEGRADED = 1
    CRITICAL = 2


@dataclass(frozen=True)
class RiskThresholds:
    critical_within_010: float = 0.35
    critical_r2: float = 0.76
    degraded_within_010: float = 0.50
    degraded_rmse: float = 0.15

    def classify(self, r2: float, rmse: float, within_010: float) -> Risk:
        # an undefined R^2 is treated as the worst case
        if within_010 < self.critical_within_010 or not r2 >= self.critical_r2:
            return Risk.CRITICAL
        if within_010 < self.degraded_within_010 or rmse > self.degraded_rmse:
            return Risk.DEGRADED
        return Risk.NOMINAL


DEFAULT_THRESHOLDS = RiskThresholds()


def _f32(value: float) -> float:
    return float(np.float32(value))


def bucket_of(strength: float, bucket_count: int = DEFAULT_BUCKETS) -> int:
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength {strength} outside [0, 1]")
    return min(bucket_count - 1, int(math.floor(strength * bucket_count)))


@dataclass(frozen=True)
class LutEntry:
    category_id: int
    bucket: int
    n: int
    r2: float
    rmse: float
    mae: float
    within_010: float
    within_020: float
    risk: Risk

    @property
    def key(self) -> Tuple[int, int]:
        return self.category_id, self.bucket

    @property
    def category(self) -> FaultCategory:
        return CATEGORIES[self.category_id]


class FaultLookupTable:
    """Immutable table of entries sorted by ``(category_id, bucket)``.

    ``query`` reads a dense slot array that is resolved once at construction
    (exact hit or nearest populated bucket within radius 1), so a lookup does
    no searching and no allocation.  When the ``_slots`` extension is built the
    instance's ``query`` is its C implementation; ``query_py`` is the same
    logic in Python.  ``lookup`` resolves keys by binary search and is the
    reference both are checked against.
    """

    def __init__(self, entries: Sequence[LutEntry], bucket_count: int = DEFAULT_BUCKETS, version: int = VERSION):
        if not 1 <= bucket_count <= 255:
            raise ValueError("bucket_count must fit in a u8")
        entries = tuple(entries)
        keys = [(e.category_id << 8) | e.bucket for e in entries]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            raise ValueError("entries must be sorted by (category_id, bucket) with unique keys")
        for e in entries:
            if not 0 <= e.category_id < len(CATEGORIES) or not 0 <= e.bucket < bucket_count:
                raise ValueError(f"entry key {e.key} out of range")
        if len(entries) > len(CATEGORIES) * bucket_count:
            raise ValueError("more entries than categories x buckets")
        self.version = version
        self.bucket_count = bucket_count
        self.entries = entries
        self._keys = keys
        self._slots: List[Optional[LutEntry]] = [
            self.lookup(cid, b) for cid in range(len(CATEGORIES)) for b in range(bucket_count)
        ]
        if SlotIndex is not None:
            self.query = SlotIndex(self._slots, bucket_count, len(CATEGORIES)).query

    def __eq__(self, other):
        if not isinstance(other, FaultLookupTable):
            return NotImplemented
        return (self.version, self.bucket_count, self.entries) == (other.version, other.bucket_count, other.entries)

    def __len__(self):
        return len(self.entries)

    def __repr__(self):
        return f"FaultLookupTable({len(self.entries)} entries, {self.bucket_count} buckets)"

    def _exact(self, cid: int, bucket: int) -> Optional[LutEntry]:
        key = (cid << 8) | bucket
        i = bisect.bisect_left(self._keys, key)
        if i < len(self._keys) and self._keys[i] == key:
            return self.entries[i]
        return None

    def lookup(self, cid: int, bucket: int) -> Optional[LutEntry]:
        """Binary-search resolution of a key; ``None`` means not covered.

        On a miss the nearest populated bucket of the same category within
        ``FALLBACK_RADIUS`` is used, preferring the more severe neighbour.
        """
        hit = self._exact(cid, bucket)
        if hit is not None:
            return hit
        for d in range(1, FALLBACK_RADIUS + 1):
            for b in (bucket + d, bucket - d):
                if 0 <= b < self.bucket_count:
                    hit = self._exact(cid, b)
                    if hit is not None:
                        return hit
        return None

    def query(self, cat, strength: float) -> Optional[LutEntry]:
        """Assessment for a fault condition, or ``None`` when not covered."""
        return self.query_py(cat, strength)

    def query_py(self, cat, strength: float) -> Optional[LutEntry]:
        if not 0.0 <= strength <= 1.0:
            raise ValueError("strength outside [0, 1]")
        cid = cat if cat.__class__ is int else cat.id
        if not 0 <= cid < len(CATEGORIES):
            raise KeyError(f"category id {cid} out of range")
        b = int(strength * self.bucket_count)
        if b >= self.bucket_count:
            b = self.bucket_count - 1
        return self._slots[cid * self.bucket_count + b]

    @property
    def accelerated(self) -> bool:
        return "query" in self.__dict__

    @property
    def nbytes(self) -> int:
        return HEADER.size + ENTRY.size * len(self.entries) + CRC.size


def build(
    summaries: Iterable[Tuple[object, float, MetricsSummary]],
    bucket_count: int = DEFAULT_BUCKETS,
    thresholds: RiskThresholds = DEFAULT_THRESHOLDS,
) -> FaultLookupTable:
    """Bucket per-scenario summaries by strength and merge each bucket by n-weighted mean."""
    grouped = {}
    count = 0
    for cat, strength, summary in summaries:
        count += 1
        if summary.n < 1:
            raise ValueError(f"summary {summary.group!r} has no samples")
        key = (category(cat).id, bucket_of(strength, bucket_count))
        grouped.setdefault(key, []).append(summary)
    if count == 0:
        raise EmptyInput("no summaries to build a table from")

    entries = []
    for (cid, bucket), items in sorted(grouped.items()):
        n = sum(s.n for s in items)

        def wmean(attr):
            # fsum is exactly rounded, so the result ignores input order
            return math.fsum(s.n * getattr(s, attr) for s in items) / n

        r2, rmse, mae = _f32(wmean("r2_overall")), _f32(wmean("rmse")), _f32(wmean("mae"))
        w010, w020 = _f32(wmean("within_010")), _f32(wmean("within_020"))
        entries.append(
            LutEntry(cid, bucket, n, r2, rmse, mae, w010, w020, thresholds.classify(r2, rmse, w010))
        )
    return FaultLookupTable(entries, bucket_count)


def serialize(table: FaultLookupTable) -> bytes:
    parts = [HEADER.pack(MAGIC, table.version, table.bucket_count, 0, len(table.entries))]
    for e in table.entries:
        parts.append(
            ENTRY.pack(e.category_id, e.bucket, int(e.risk), e.n, e.r2, e.rmse, e.mae, e.within_010, e.within_020)
        )
    body = b"".join(parts)
    return body + CRC.pack(zlib.crc32(body))


def deserialize(data: bytes) -> FaultLookupTable:
    """Decode and verify a ``.flut`` image.

    The checksum is verified before any field is trusted, so any single
    corrupted byte surfaces as ChecksumError.
    """
    data = bytes(data)
    if len(data) < HEADER.size + CRC.size:
        raise TruncationError(f"{len(data)} bytes is shorter than an empty table")
    (stored,) = CRC.unpack_from(data, len(data) - CRC.size)
    if zlib.crc32(data[: -CRC.size]) != stored:
        raise ChecksumError("CRC-32 mismatch")
    magic, version, bucket_count, _reserved, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionError(f"unsupported version {version}")
    expected = HEADER.size + ENTRY.size * count + CRC.size
    if len(data) != expected:
        raise TruncationError(f"expected {expected} bytes for {count} entries, got {len(data)}")
    entries = []
    for i in range(count):
        cid, bucket, risk, n, r2, rmse, mae, w010, w020 = ENTRY.unpack_from(data, HEADER.size + i * ENTRY.size)
        try:
            risk = Risk(risk)
        except ValueError:
            raise LutFormatError(f"entry {i}: bad risk code {risk}") from None
        entries.append(LutEntry(cid, bucket, n, r2, rmse, mae, w010, w020, risk))
    try:
        return FaultLookupTable(entries, bucket_count, version)
    except ValueError as exc:
        raise LutFormatError(str(exc)) from None


def load(path) -> FaultLookupTable:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def save(table: FaultLookupTable, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(table))


def entries_to_csv(table: FaultLookupTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["category", "bucket", "n", "r2", "rmse", "mae", "within_010", "within_020", "risk"])
    for e in table.entries:
        w.writerow([e.category.name, e.bucket, e.n, e.r2, e.rmse, e.mae, e.within_010, e.within_020, e.risk.name.lower()])
    return buf.getvalue()


@dataclass(frozen=True)
class LatencyReport:
    iterations: int
    p50_ns: int
    p99_ns: int
    max_ns: int
    table_bytes: int
    allocating_queries: Optional[int] = None

    def __str__(self):
        s = (
            f"iterations={self.iterations} p50={self.p50_ns}ns p99={self.p99_ns}ns "
            f"max={self.max_ns}ns table_bytes={self.table_bytes}"
        )
        if self.allocating_queries is not None:
            s += f" allocating_queries={self.allocating_queries}"
        return s


def count_allocating_queries(table: FaultLookupTable, queries: Sequence[Tuple[int, float]]) -> int:
    """Number of queries during which the traced heap rose above its starting level."""
    started = not tracemalloc.is_tracing()
    if started:
        tracemalloc.start()
    reset, traced = tracemalloc.reset_peak, tracemalloc.get_traced_memory
    q = table.query
    hits = 0
    try:
        for cid, s in queries:
            reset()
            q(cid, s)
            current, peak = traced()
            if peak > current:
                hits += 1
    finally:
        if started:
            tracemalloc.stop()
    return hits


def bench_query(
    table: FaultLookupTable,
    iterations: int = 1_000_000,
    seed: int = 0,
    check_allocations: bool = False,
) -> LatencyReport:
    """Time ``iterations`` uniform-random valid queries one by one on the monotonic clock."""
    if iterations < 1000:
        raise ValueError("iterations must be >= 1000")
    rnd = random.Random(seed)
    pool = [(rnd.randrange(len(CATEGORIES)), rnd.random()) for _ in range(4096)]
    queries = [pool[i & 4095] for i in range(iterations)]
    clock = time.perf_counter_ns
    q = table.query
    for cid, s in pool:
        q(cid, s)
    lat = [0] * iterations
    i = 0
    for cid, s in queries:
        t0 = clock()
        q(cid, s)
        lat[i] = clock() - t0
        i += 1
    lat.sort()
    allocs = count_allocating_queries(table, queries) if check_allocations else None
    return LatencyReport(
        iterations=iterations,
        p50_ns=lat[iterations // 2],
        p99_ns=lat[min(iterations - 1, (iterations * 99) // 100)],
        max_ns=lat[-1],
        table_bytes=table.nbytes,
        allocating_queries=allocs,
    )
