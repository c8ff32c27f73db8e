import csv
import io

import numpy as np
import pytest

from polystore import bench
from polystore.analytics import WorkloadConfig


def test_micro_small():
    rep = bench.bench_micro(sizes=(1000, 5000), repeats=1, seed=3)
    assert [(r.case, r.engine_or_mode) for r in rep.rows[:4]] == [
        ("count", "array"), ("count", "relational"), ("distinct", "array"),
        ("distinct", "relational")]
    assert rep.summary["1000"]["count"] == 1000
    rng = np.random.default_rng(3)
    first = rng.integers(0, 2, size=1000)
    assert rep.summary["1000"]["distinct"] == len(np.unique(first))


def test_matmul_small():
    rep = bench.bench_matmul(sizes=(8, 16), repeats=1)
    assert {r.size for r in rep.rows} == {8, 16}
    assert all(s["max_rel_error"] <= 1e-12 for s in rep.summary.values())


def test_overhead_small():
    rep = bench.bench_overhead(repeats=1, scale=0.001)
    assert set(rep.summary) == {c for c, _, _ in bench.OVERHEAD_QUERIES}
    assert len(rep.rows) == 2 * len(bench.OVERHEAD_QUERIES)


def test_medical_small():
    rep = bench.bench_medical(WorkloadConfig(n_patients=12, length=64, n_bins=4, k=3))
    assert rep.summary["labels_identical"]
    assert set(rep.summary["totals_ms"]) == {"array-only", "relational-only", "hybrid"}


def test_csv_schema_and_round_trip():
    rep = bench.bench_matmul(sizes=(4,), repeats=1)
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert list(rows[0]) == list(bench.CSV_FIELDS)
    assert [r["engine_or_mode"] for r in rows] == ["array", "relational"]


def test_strip_timing_is_deterministic():
    a = bench.bench_micro(sizes=(1000,), repeats=1, seed=1).to_json()
    b = bench.bench_micro(sizes=(1000,), repeats=1, seed=1).to_json()
    assert bench.strip_timing(a) == bench.strip_timing(b)
    assert "elapsed_ms" not in bench.strip_timing(a)["rows"][0]


def test_full_scale():
    cfg = bench.full_scale(WorkloadConfig())
    assert (cfg.n_patients, cfg.length) == (600, 16384)


def test_time_of_missing():
    with pytest.raises(KeyError):
        bench.BenchReport("x", {}).time_of("a", "b")
