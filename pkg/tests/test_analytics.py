import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra import numpy as hnp
from sklearn.base import clone
from sklearn.feature_extraction.text import TfidfTransformer
from sklearn.neighbors import NearestNeighbors
from sklearn.pipeline import make_pipeline
from sklearn.utils.estimator_checks import check_estimator

from polystore.analytics import (DETERIORATING, MODES, STABLE, STAGES, CosineKNNClassifier,
                                 HaarScaleHistogram, TfidfWeighting, WorkloadConfig, gen_cohort,
                                 haar_patient_vector, knn_classify, run_all_modes, run_workload,
                                 tfidf_weight)
from polystore.analytics.estimators import cosine_distances, idf_vector
from polystore.array.haar import dwt_haar, scale_slices


# ---------------------------------------------------------------- tf-idf

def test_tfidf_two_documents():
    w = tfidf_weight([[2, 0], [1, 3]])
    idf2 = math.log(3 / 2) + 1
    np.testing.assert_allclose(w, [[2, 0], [1, 3 * idf2]], rtol=0, atol=1e-12)


def test_tfidf_zero_column_and_full_df():
    counts = np.array([[1, 0, 4], [2, 0, 5]])
    assert idf_vector(counts)[1] == pytest.approx(math.log(3) + 1, abs=1e-12)
    assert idf_vector(counts)[0] == pytest.approx(1.0, abs=1e-12)
    assert (tfidf_weight(counts)[:, 1] == 0).all()


def test_tfidf_rejects_negative():
    with pytest.raises(ValueError, match="Negative"):
        tfidf_weight([[1, -1]])


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.int64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
                  elements=st.integers(0, 9)))
def test_tfidf_matches_sklearn(counts):
    oracle = TfidfTransformer(norm=None, smooth_idf=True).fit_transform(counts).toarray()
    np.testing.assert_allclose(tfidf_weight(counts), oracle, rtol=1e-12, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.integers(0, 49))
def test_idf_strictly_decreasing_in_df(n, df):
    assume(df < n)
    lo = np.zeros((n, 1))
    lo[:df] = 1
    hi = lo.copy()
    hi[df] = 1
    assert idf_vector(hi)[0] < idf_vector(lo)[0]


# ---------------------------------------------------------------- k-NN

def test_knn_exact_match_k1():
    train = [[1.0, 0.0], [0.0, 1.0]]
    assert knn_classify(train, [STABLE, DETERIORATING], [0.0, 1.0], 1)[0] == DETERIORATING


def test_orthogonal_distance_one():
    assert cosine_distances([[1.0, 0.0]], [0.0, 3.0]).tolist() == [1.0]
    assert cosine_distances([[0.0, 0.0]], [1.0, 1.0]).tolist() == [1.0]


def test_knn_hand_fixture():
    train = [[1.0, 0.0], [1.0, 0.1], [1.0, 1.0], [0.0, 1.0]]
    labels = [STABLE, STABLE, DETERIORATING, DETERIORATING]
    test = [1.0, 0.05]
    nt = math.hypot(1.0, 0.05)
    expected = [1 - 1 / nt, 1 - 1.005 / (math.hypot(1, 0.1) * nt), 1 - 1.05 / (math.sqrt(2) * nt)]
    label, nbrs = knn_classify(train, labels, test, 3)
    assert label == STABLE
    assert [i for i, _, _ in nbrs] == [1, 0, 2]
    assert sorted(d for _, d, _ in nbrs) == pytest.approx(sorted(expected), abs=1e-12)


def test_knn_tie_break_by_id():
    label, nbrs = knn_classify([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]],
                               [DETERIORATING, STABLE, STABLE], [5.0, 0.0], 1)
    assert nbrs[0][0] == 0 and label == DETERIORATING


def test_knn_k_too_large():
    with pytest.raises(ValueError):
        knn_classify([[1.0]], [STABLE], [1.0], 3)


vectors = st.integers(3, 10).flatmap(lambda n: st.tuples(
    hnp.arrays(np.float64, (n, 4), elements=st.integers(0, 6).map(float)),
    hnp.arrays(np.float64, 4, elements=st.integers(0, 6).map(float)),
    st.lists(st.sampled_from([STABLE, DETERIORATING]), min_size=n, max_size=n)))


@settings(max_examples=100, deadline=None)
@given(vectors, st.integers(-6, 6))
def test_knn_invariant_under_power_of_two_scaling(case, e):
    train, x, labels = case
    c = 2.0 ** e
    a = knn_classify(train, labels, x, 3)
    b = knn_classify(train * c, labels, x * c, 3)
    assert a == b


@settings(max_examples=100, deadline=None)
@given(vectors, st.floats(1e-3, 1e3))
def test_knn_argmin_set_invariant_under_scaling(case, c):
    train, x, _ = case

    def argmin_set(d):
        return set(np.flatnonzero(np.isclose(d, d.min(), rtol=0, atol=1e-9)))
    assert argmin_set(cosine_distances(train, x)) == argmin_set(cosine_distances(train * c, x * c))


@settings(max_examples=60, deadline=None)
@given(vectors)
def test_cosine_distance_matches_sklearn(case):
    train, x, _ = case
    assume(np.abs(x).sum() > 0 and (np.abs(train).sum(axis=1) > 0).all())
    nn = NearestNeighbors(metric="cosine", algorithm="brute").fit(train)
    dist, _ = nn.kneighbors([x], n_neighbors=len(train))
    np.testing.assert_allclose(np.sort(cosine_distances(train, x)), dist[0], atol=1e-12)


# ---------------------------------------------------------------- Haar histograms

def test_constant_signal_histogram():
    b = 4
    vec = haar_patient_vector(np.ones(8), b, [-4, -2, 0, 2, 4])
    per_scale = vec.reshape(-1, b)
    assert per_scale[0].tolist() == [0, 0, 0, 1]        # DC = 8 / sqrt(8)
    for k, sl in enumerate(scale_slices(8)[1:], 1):
        assert per_scale[k].tolist() == [0, 0, sl.stop - sl.start, 0]


def test_alternating_signal_finest_scale():
    vec = haar_patient_vector([1.0, -1.0, 1.0, -1.0], 2, [-2.0, 0.0, 2.0])
    np.testing.assert_allclose(dwt_haar(np.array([1.0, -1.0, 1.0, -1.0])),
                               [0, 0, math.sqrt(2), math.sqrt(2)], atol=1e-15)
    assert vec[-2:].tolist() == [0, 2]
    assert vec.reshape(-1, 2).sum(axis=1).tolist() == [1, 1, 2]


def test_haar_vector_rejects_bad_length():
    with pytest.raises(ValueError):
        haar_patient_vector(np.ones(6), 2, [-1, 0, 1])


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 8).flatmap(lambda p: hnp.arrays(np.float64, 2 ** p,
                                                      elements=st.floats(-50, 50))),
       st.integers(2, 8))
def test_histogram_conservation(x, b):
    vec = haar_patient_vector(x, b, np.linspace(-200, 200, b + 1))
    sizes = [sl.stop - sl.start for sl in scale_slices(len(x))]
    assert vec.reshape(-1, b).sum(axis=1).tolist() == sizes
    assert (vec >= 0).all()


# ---------------------------------------------------------------- estimator API

@pytest.mark.parametrize("est", [CosineKNNClassifier(n_neighbors=1), TfidfWeighting()],
                         ids=lambda e: type(e).__name__)
def test_sklearn_estimator_checks(est):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        check_estimator(est)


def test_haar_histogram_estimator():
    cohort = gen_cohort(WorkloadConfig(n_patients=12, length=64))
    X = np.stack([p.signal for p in cohort])
    y = [p.label for p in cohort]
    h = HaarScaleHistogram(n_bins=4).fit(X[:10])
    assert h.n_features_in_ == 64 and h.n_scales_ == 7
    out = h.transform(X)
    assert out.shape == (12, 28)
    assert clone(h).get_params() == {"n_bins": 4}
    with pytest.raises(ValueError):
        h.transform(X[:, :32])
    with pytest.raises(ValueError):
        HaarScaleHistogram().fit(X[:, :48])
    pipe = make_pipeline(HaarScaleHistogram(4), TfidfWeighting(), CosineKNNClassifier(3))
    pred = pipe.fit(X[:10], y[:10]).predict(X[10:])
    assert set(pred) <= {STABLE, DETERIORATING}


# ---------------------------------------------------------------- cohort and workload

def test_cohort_deterministic():
    cfg = WorkloadConfig(n_patients=8, length=64, seed=9)
    a, b = gen_cohort(cfg), gen_cohort(cfg)
    assert all(np.array_equal(p.signal, q.signal) and p.label == q.label for p, q in zip(a, b))


def test_cohort_full_size():
    cohort = gen_cohort(WorkloadConfig(n_patients=600, length=1024))
    assert len(cohort) == 600 and {len(p.signal) for p in cohort} == {1024}
    assert [p.patient_id for p in cohort] == list(range(600))


def test_cohort_no_anomalies():
    cohort = gen_cohort(WorkloadConfig(n_patients=40, length=64, anomaly_rate=0.0))
    assert {p.label for p in cohort} == {STABLE}


@pytest.mark.parametrize("kw", [{"n_bins": 1}, {"k": 4}, {"k": 0}, {"length": 100},
                                {"length": 4}, {"mode": "gpu"}, {"n_test": 0},
                                {"n_patients": 5, "k": 5}, {"anomaly_rate": 2.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        WorkloadConfig(**kw)


def test_parseval_on_cohort():
    for p in gen_cohort(WorkloadConfig(n_patients=6, length=256)):
        c = dwt_haar(p.signal)
        assert math.isclose(float(c @ c), float(p.signal @ p.signal), rel_tol=1e-9)


def test_modes_agree_and_report_stages():
    cfg = WorkloadConfig(n_patients=24, length=128, n_bins=8, k=3, n_test=4, seed=2)
    results = run_all_modes(cfg)
    assert set(results) == set(MODES)
    labels = {m: r.labels for m, r in results.items()}
    assert labels["array-only"] == labels["relational-only"] == labels["hybrid"]
    assert sorted(labels["hybrid"]) == [20, 21, 22, 23]
    for r in results.values():
        assert set(r.timings) == set(STAGES)
        assert r.total_ms == pytest.approx(sum(r.timings.values()))
    ids = {m: [[i for i, _, _ in nb] for nb in r.neighbors.values()] for m, r in results.items()}
    assert ids["array-only"] == ids["relational-only"] == ids["hybrid"]


def test_workload_matches_estimator_pipeline():
    cfg = WorkloadConfig(n_patients=30, length=128, n_bins=8, k=5, n_test=5, seed=4)
    cohort = gen_cohort(cfg)
    X = np.stack([p.signal for p in cohort])
    y = [p.label for p in cohort]
    pipe = make_pipeline(HaarScaleHistogram(8), TfidfWeighting(), CosineKNNClassifier(5))
    pred = pipe.fit(X[:25], y[:25]).predict(X[25:])
    res = run_workload(replace(cfg, mode="array-only"), cohort)
    assert [res.labels[q] for q in range(25, 30)] == list(pred)
