"""The waveform classification workload in three execution modes.

* ``array-only``: Haar and binning are array-engine operators; TF-IDF and
  k-NN run as vectorised numpy over the array engine's buffers.
* ``relational-only``: every stage is SQL on the relational engine. The
  Haar transform is one pair of ``GROUP BY`` aggregates per level.
* ``hybrid``: Haar and binning on the array engine, the histogram array is
  cast into a cell table, and TF-IDF and k-NN run as SQL.

Training patients have ids ``0 .. n_train-1``; the rest are test patients.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from ..array.engine import ArrayEngine, DenseArray, bin_width
from ..casts import CastSpec, array_to_relation
from ..islands import Engines
from ..relational.engine import RelationalEngine
from ..relational.relation import FLOAT64, INT64, Relation
from .cohort import MODES, WorkloadConfig, gen_cohort
from .estimators import idf_vector, scale_edges, vote

STAGES = ("haar", "bin", "cast", "tfidf", "knn")


@dataclass
class WorkloadResult:
    mode: str
    labels: dict                 # test patient id -> predicted label
    neighbors: dict              # test patient id -> [(id, distance, label), ...]
    timings: dict                # stage -> ms
    truth: dict = field(default_factory=dict)

    @property
    def total_ms(self):
        return sum(self.timings.values())

    def to_json(self):
        return {"mode": self.mode,
                "labels": {str(k): v for k, v in self.labels.items()},
                "truth": {str(k): v for k, v in self.truth.items()},
                "neighbors": {str(k): [[i, d, lab] for i, d, lab in v]
                              for k, v in self.neighbors.items()},
                "timings_ms": dict(self.timings), "total_ms": self.total_ms}


class _Clock:
    def __init__(self):
        self.timings = dict.fromkeys(STAGES, 0.0)

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] += (time.perf_counter() - t0) * 1000.0


def _distance(dot, norm_a, norm_b):
    denom = math.sqrt(norm_a) * math.sqrt(norm_b)
    return 1.0 if denom == 0 else 1.0 - dot / denom


# ---------------------------------------------------------------- array engine

def _array_haar_bin(arrays: ArrayEngine, config, clock):
    with clock.stage("haar"):
        coeffs = arrays.execute("dwt_haar(signals)")
        arrays.put(DenseArray("coeffs", coeffs.dims, coeffs.values, coeffs.kept), replace=True)
    with clock.stage("bin"):
        edges = scale_edges(coeffs.values[:config.n_train])
        arrays.store("edges", [("scale", len(edges)), ("bound", 2)], edges, replace=True)
        return arrays.execute(f"bin_hist(coeffs, edges, {config.n_bins})")


def _array_only(engines, config, labels, clock):
    hist = _array_haar_bin(engines.array, config, clock)
    with clock.stage("tfidf"):
        counts = hist.values
        weights = counts * idf_vector(counts[:config.n_train])
    with clock.stage("knn"):
        train = weights[:config.n_train]
        sq = (train * train).sum(axis=1)
        out = {}
        for q in range(config.n_train, config.n_patients):
            x = weights[q]
            dots = train @ x
            nq = float(x @ x)
            dist = [_distance(float(d), float(n), nq) for d, n in zip(dots, sq)]
            out[q] = vote(dist, labels, list(range(config.n_train)), config.k)
    return out


# ---------------------------------------------------------------- relational engine

def _sql_haar(rel: RelationalEngine, length):
    """Haar levels as GROUP BY aggregates; returns [(scale, table), ...] DC last."""
    tables = []
    current = "wk_sig"
    m = length
    while m > 1:
        s = m.bit_length() - 1
        detail, approx = f"wk_d{s}", f"wk_a{s}"
        rel.execute(f"CREATE TABLE {detail} AS SELECT p, i / 2 AS i, "
                    f"SUM(val * (1 - 2 * (i % 2))) / SQRT(2) AS val FROM {current} GROUP BY p, i / 2")
        rel.execute(f"CREATE TABLE {approx} AS SELECT p, i / 2 AS i, "
                    f"SUM(val) / SQRT(2) AS val FROM {current} GROUP BY p, i / 2")
        if current != "wk_sig":
            rel.drop_table(current)
        tables.append((s, detail))
        current = approx
        m //= 2
    tables.append((0, current))
    return tables


def _sql_bin(rel: RelationalEngine, tables, config):
    rel.execute("CREATE TABLE wk_counts (p int64, t int64, c int64)")
    b = config.n_bins
    for s, table in sorted(tables):
        lo, hi = rel.execute(f"SELECT MIN(val), MAX(val) FROM {table} "
                             f"WHERE p < {config.n_train}").rows[0]
        w = bin_width(lo, hi, b)
        rel.execute(f"INSERT INTO wk_counts SELECT p, "
                    f"LEAST(GREATEST(FLOOR((val - ({lo!r})) / {w!r}), 0), {b - 1}) + {s * b} AS t, "
                    f"COUNT(*) AS c FROM {table} GROUP BY p, t")


def _sql_tfidf_knn(rel: RelationalEngine, config, labels, clock):
    """TF-IDF and k-NN over ``wk_counts(p, t, c)``, which holds only non-zero counts."""
    n = config.n_train
    with clock.stage("tfidf"):
        # 1 - LEAST(p / n, 1) is 1 for training patients and 0 otherwise.
        rel.execute(f"CREATE TABLE wk_df AS SELECT t, SUM(1 - LEAST(p / {n}, 1)) AS df "
                    f"FROM wk_counts GROUP BY t")
        rel.execute(f"CREATE TABLE wk_idf AS SELECT t, LN((1.0 + {n}) / (1.0 + df)) + 1.0 AS idf "
                    f"FROM wk_df")
        rel.execute("CREATE TABLE wk_w AS SELECT c.p AS p, c.t AS t, c.c * i.idf AS w "
                    "FROM wk_counts c JOIN wk_idf i ON c.t = i.t")
    with clock.stage("knn"):
        norms = dict(rel.execute("SELECT p, SUM(w * w) AS nn FROM wk_w GROUP BY p").rows)
        out = {}
        for q in range(n, config.n_patients):
            dots = dict(rel.execute(
                f"SELECT a.p AS p, SUM(a.w * b.w) AS dot FROM wk_w a JOIN wk_w b ON a.t = b.t "
                f"WHERE b.p = {q} AND a.p < {n} GROUP BY a.p").rows)
            nq = norms.get(q, 0.0)
            dist = [_distance(dots.get(p, 0.0), norms.get(p, 0.0), nq) for p in range(n)]
            out[q] = vote(dist, labels, list(range(n)), config.k)
    return out


def _relational_only(engines, config, labels, clock):
    rel = engines.relational
    with clock.stage("haar"):
        tables = _sql_haar(rel, config.length)
    with clock.stage("bin"):
        _sql_bin(rel, tables, config)
    return _sql_tfidf_knn(rel, config, labels, clock)


def _hybrid(engines, config, labels, clock):
    hist = _array_haar_bin(engines.array, config, clock)
    with clock.stage("cast"):
        cells = array_to_relation(hist, CastSpec("array", "relational"), "wk_hist")
        engines.relational.store(cells, validate=False)
        engines.relational.execute("CREATE TABLE wk_counts AS SELECT patient AS p, bin AS t, "
                                   "val AS c FROM wk_hist WHERE val > 0")
    return _sql_tfidf_knn(engines.relational, config, labels, clock)


# ---------------------------------------------------------------- driver

def load_cohort(engines: Engines, cohort, mode):
    """Put the signals where ``mode`` expects them (not part of the timed run)."""
    signals = np.stack([p.signal for p in cohort])
    n, length = signals.shape
    if mode in ("array-only", "hybrid"):
        engines.array.store("signals", [("patient", n), ("t", length)], signals, replace=True)
    else:
        rows = [(p, i, v) for p in range(n) for i, v in enumerate(signals[p].tolist())]
        engines.relational.store(Relation("wk_sig", (("p", INT64), ("i", INT64), ("val", FLOAT64)),
                                          rows), validate=False)


_RUNNERS = {"array-only": _array_only, "relational-only": _relational_only, "hybrid": _hybrid}


def run_workload(config: WorkloadConfig, cohort=None, engines=None) -> WorkloadResult:
    cohort = gen_cohort(config) if cohort is None else cohort
    engines = Engines() if engines is None else engines
    load_cohort(engines, cohort, config.mode)
    labels = [p.label for p in cohort[:config.n_train]]
    clock = _Clock()
    votes = _RUNNERS[config.mode](engines, config, labels, clock)
    return WorkloadResult(config.mode, {q: v[0] for q, v in votes.items()},
                          {q: v[1] for q, v in votes.items()}, clock.timings,
                          {p.patient_id: p.label for p in cohort[config.n_train:]})


def run_all_modes(config: WorkloadConfig) -> dict:
    """Same cohort through every mode, each on fresh engines."""
    cohort = gen_cohort(config)
    return {m: run_workload(replace(config, mode=m), cohort) for m in MODES}
