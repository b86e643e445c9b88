import random
import struct
import zlib

import pytest
from hypothesis import given, settings, strategies as st

from faultforge import faultlut
from faultforge.errors import ChecksumError, EmptyInput, MagicError, TruncationError, VersionError
from faultforge.faultlut import (
    DEFAULT_THRESHOLDS,
    FaultLookupTable,
    LutEntry,
    Risk,
    bench_query,
    bucket_of,
    build,
    deserialize,
    serialize,
)
from faultforge.metrics import MetricsSummary
from faultforge.scenario import CATEGORIES, category


def summary(n=10, r2=0.9, rmse=0.05, mae=0.04, w010=0.8, w020=0.95, group="g"):
    return MetricsSummary(group, n, r2, r2, r2, rmse * rmse, rmse, mae, w010, w020, 0.05)


def full_table():
    return build([(c, (b + 0.5) / 10, summary()) for c in CATEGORIES for b in range(10)])


def random_table(rnd: random.Random) -> FaultLookupTable:
    buckets = rnd.randint(2, 64)
    keys = sorted(rnd.sample([(c, b) for c in range(22) for b in range(buckets)], rnd.randint(0, 40)))
    f32 = lambda v: struct.unpack("<f", struct.pack("<f", v))[0]
    entries = [
        LutEntry(c, b, rnd.randint(1, 2**32 - 1), *(f32(rnd.uniform(-1, 1)) for _ in range(5)), Risk(rnd.randint(0, 2)))
        for c, b in keys
    ]
    return FaultLookupTable(entries, buckets)


def test_bucket_rule():
    assert bucket_of(0.14) == 1
    assert bucket_of(0.0) == 0
    assert bucket_of(1.0) == 9
    assert bucket_of(0.999) == 9


def test_single_summary_lands_in_bucket_one():
    t = build([("FOG", 0.14, summary())])
    [e] = t.entries
    assert e.key == (category("FOG").id, 1)


def test_weighted_merge():
    t = build([("FOG", 0.12, summary(n=10, rmse=0.1)), ("FOG", 0.18, summary(n=30, rmse=0.2))])
    [e] = t.entries
    assert e.n == 40
    assert e.rmse == pytest.approx(0.175, rel=1e-6)


def test_paper_worst_fault_is_critical():
    t = build([("FOG", 0.15, summary(r2=0.755, rmse=0.209, w010=0.310, w020=0.662))])
    assert t.entries[0].risk is Risk.CRITICAL


def test_paper_best_fault_is_degraded():
    assert DEFAULT_THRESHOLDS.classify(r2=0.835, rmse=0.181, within_010=0.445) is Risk.DEGRADED


def test_risk_rule_cases():
    c = DEFAULT_THRESHOLDS.classify
    assert c(0.9, 0.05, 0.34) is Risk.CRITICAL
    assert c(0.75, 0.05, 0.9) is Risk.CRITICAL
    assert c(0.9, 0.16, 0.9) is Risk.DEGRADED
    assert c(0.9, 0.05, 0.49) is Risk.DEGRADED
    assert c(0.9, 0.15, 0.50) is Risk.NOMINAL
    assert c(float("nan"), 0.05, 0.9) is Risk.CRITICAL


def test_build_empty():
    with pytest.raises(EmptyInput):
        build([])


@given(st.lists(st.tuples(st.sampled_from(CATEGORIES), st.floats(0, 1), st.integers(1, 500), st.floats(0, 0.5)), min_size=1, max_size=30), st.randoms(use_true_random=False))
@settings(max_examples=50, deadline=None)
def test_build_permutation_invariant(items, rnd):
    data = [(c, s, summary(n=n, rmse=r, mae=r / 2)) for c, s, n, r in items]
    shuffled = list(data)
    rnd.shuffle(shuffled)
    assert serialize(build(data)) == serialize(build(shuffled))


def test_empty_table_is_sixteen_bytes():
    data = serialize(FaultLookupTable([]))
    assert len(data) == 4 + 2 + 1 + 1 + 4 + 4 == 16
    assert data[:4] == b"FLUT"


def test_full_table_size():
    t = full_table()
    assert len(t) == 220
    assert len(serialize(t)) == 16 + 220 * 28 == t.nbytes


def test_layout_is_little_endian():
    t = build([("RAIN", 0.35, summary(n=7))])
    data = serialize(t)
    magic, version, buckets, reserved, count = struct.unpack_from("<4sHBBI", data)
    assert (magic, version, buckets, reserved, count) == (b"FLUT", 1, 10, 0, 1)
    cid, bucket, risk, n = struct.unpack_from("<HBBI", data, 12)
    assert (cid, bucket, n) == (category("RAIN").id, 3, 7)
    assert struct.unpack_from("<I", data, len(data) - 4)[0] == zlib.crc32(data[:-4])


def test_round_trip_random_tables():
    rnd = random.Random(0)
    for _ in range(200):
        t = random_table(rnd)
        data = serialize(t)
        assert deserialize(data) == t
        assert serialize(deserialize(data)) == data


def test_every_single_byte_flip_is_detected():
    data = serialize(build([("FOG", 0.15, summary()), ("RAIN", 0.9, summary())]))
    for i in range(len(data)):
        bad = bytearray(data)
        bad[i] ^= 0x5A
        with pytest.raises(ChecksumError):
            deserialize(bytes(bad))


def _reseal(body: bytes) -> bytes:
    return body + struct.pack("<I", zlib.crc32(body))


def test_structural_errors():
    data = serialize(build([("FOG", 0.15, summary())]))
    with pytest.raises(TruncationError):
        deserialize(data[:10])
    with pytest.raises(MagicError):
        deserialize(_reseal(b"FLUX" + data[4:-4]))
    with pytest.raises(VersionError):
        deserialize(_reseal(data[:4] + struct.pack("<H", 9) + data[6:-4]))
    with pytest.raises(TruncationError):
        deserialize(_reseal(data[:-8]))


def test_query_exact_hit():
    s = summary(r2=0.8)
    t = build([("FOG", 0.15, s)])
    e = t.query(category("FOG"), 0.15)
    assert e is not None and e.bucket == 1 and e.category.name == "FOG"


def test_query_absent_category():
    t = build([("FOG", 0.15, summary())])
    assert t.query(category("RAIN"), 0.15) is None


def test_query_nearest_bucket_radius_one():
    t = build([("FOG", 0.35, summary())])
    assert t.query(category("FOG"), 0.45).bucket == 3
    assert t.query(category("FOG"), 0.25).bucket == 3
    assert t.query(category("FOG"), 0.55) is None
    assert t.query(category("FOG"), 0.15) is None


def test_query_accepts_ids_and_rejects_bad_strength():
    t = full_table()
    assert t.query(3, 1.0).key == (3, 9)
    with pytest.raises(ValueError):
        t.query(3, 1.5)
    with pytest.raises(KeyError):
        t.query(22, 0.5)


def test_fast_and_python_query_agree_with_binary_search():
    rnd = random.Random(4)
    for _ in range(20):
        t = random_table(rnd)
        for cid in range(22):
            for b in range(t.bucket_count):
                s = (b + rnd.random()) / t.bucket_count
                want = t.lookup(cid, b)
                assert t.query(cid, s) is want
                assert t.query_py(cid, s) is want
                assert t.query(CATEGORIES[cid], s) is want
                if want is not None:
                    assert abs(want.bucket - b) <= 1 and want.category_id == cid


def test_accelerator_is_built():
    # the extension is optional at install time but expected in this build
    assert full_table().accelerated


def test_bench_report_order():
    r = bench_query(full_table(), 5000)
    assert r.max_ns >= r.p99_ns >= r.p50_ns > 0
    assert r.table_bytes == 16 + 220 * 28
    with pytest.raises(ValueError):
        bench_query(full_table(), 10)


def test_no_allocations_per_query():
    assert faultlut.count_allocating_queries(full_table(), [(i % 22, (i % 97) / 97) for i in range(20000)]) == 0


def test_csv_export():
    text = faultlut.entries_to_csv(full_table())
    lines = text.splitlines()
    assert lines[0].startswith("category,bucket,n")
    assert len(lines) == 221
