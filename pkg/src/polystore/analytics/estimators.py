"""Haar histogram, TF-IDF and cosine k-NN as scikit-learn estimators.

The module-level functions are the single-patient forms used by tests and
the workload runner.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from ..array.engine import histogram_by_scale
from ..array.haar import dwt_haar, is_power_of_two, scale_slices


def _check_signals(X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not is_power_of_two(X.shape[1]):
        raise ValueError(f"signal length {X.shape[1]} is not a power of two")
    return X


def scale_edges(coeffs):
    """Per-scale ``[min, max]`` over a batch of coefficient rows."""
    coeffs = np.atleast_2d(coeffs)
    return np.array([[coeffs[:, sl].min(), coeffs[:, sl].max()]
                     for sl in scale_slices(coeffs.shape[1])])


def _edges_array(edges, n_scales, n_bins):
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim == 1:
        # One boundary list shared by every scale: only its ends matter.
        if len(edges) != n_bins + 1:
            raise ValueError(f"expected {n_bins + 1} bin boundaries, got {len(edges)}")
        edges = np.tile([edges[0], edges[-1]], (n_scales, 1))
    return edges


def haar_patient_vector(signal, n_bins, edges):
    """Concatenated per-scale histograms of one signal's Haar coefficients, DC first."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or not is_power_of_two(len(signal)):
        raise ValueError(f"signal length {len(signal)} is not a power of two")
    coeffs = dwt_haar(signal)
    n_scales = len(scale_slices(len(signal)))
    return histogram_by_scale(coeffs, _edges_array(edges, n_scales, n_bins), n_bins)


class HaarScaleHistogram(TransformerMixin, BaseEstimator):
    """Signals -> per-scale coefficient histograms with edges learned in ``fit``."""

    def __init__(self, n_bins=16):
        self.n_bins = n_bins

    def fit(self, X, y=None):
        X = _check_signals(validate_data(self, X, dtype=np.float64))
        if self.n_bins < 2:
            raise ValueError("n_bins must be at least 2")
        self.edges_ = scale_edges(dwt_haar(X))
        self.n_scales_ = len(self.edges_)
        return self

    def transform(self, X):
        check_is_fitted(self, "edges_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return histogram_by_scale(dwt_haar(X), self.edges_, self.n_bins)


def idf_vector(counts):
    """Smoothed idf per column: ``ln((1 + N) / (1 + df)) + 1``."""
    counts = np.atleast_2d(np.asarray(counts, dtype=np.float64))
    n = counts.shape[0]
    df = np.count_nonzero(counts > 0, axis=0)
    # math.log, not np.log, so every execution mode sees identical bits.
    return np.array([math.log((1 + n) / (1 + int(d))) + 1.0 for d in df])


class TfidfWeighting(TransformerMixin, BaseEstimator):
    """Count matrix -> counts scaled by the idf of the fitted (training) rows."""

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64)
        if (X < 0).any():
            raise ValueError("Negative values in data: counts must be non-negative")
        self.idf_ = idf_vector(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "idf_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        if (X < 0).any():
            raise ValueError("Negative values in data: counts must be non-negative")
        return X * self.idf_

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.positive_only = True
        return tags


def tfidf_weight(counts):
    """Weight a count matrix with idf fitted on the same rows."""
    return TfidfWeighting().fit_transform(counts)


def cosine_distances(train, x):
    """1 - cos(train_i, x); an all-zero vector is at distance 1 from everything."""
    train = np.atleast_2d(np.asarray(train, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    dots = train @ x
    norms = np.sqrt((train * train).sum(axis=1)) * math.sqrt(float(x @ x))
    out = np.ones(len(train))
    ok = norms > 0
    out[ok] = 1.0 - dots[ok] / norms[ok]
    return out


def vote(distances, labels, ids, k):
    """Majority label of the ``k`` nearest; distance ties go to the smaller id.

    Returns ``(label, [(id, distance, label), ...])``. A tied vote goes to
    the tied label whose first neighbour ranks highest.
    """
    order = sorted(range(len(ids)), key=lambda i: (distances[i], ids[i]))[:k]
    neighbors = [(ids[i], float(distances[i]), labels[i]) for i in order]
    tally = Counter(lab for _, _, lab in neighbors)
    top = max(tally.values())
    for _, _, lab in neighbors:
        if tally[lab] == top:
            return lab, neighbors
    raise AssertionError("unreachable")


def knn_classify(train_vectors, labels, test_vector, k, ids=None):
    train_vectors = np.atleast_2d(np.asarray(train_vectors, dtype=np.float64))
    if k > len(train_vectors):
        raise ValueError(f"k={k} exceeds the {len(train_vectors)} training vectors")
    if k < 1:
        raise ValueError("k must be positive")
    ids = list(range(len(train_vectors))) if ids is None else list(ids)
    return vote(cosine_distances(train_vectors, test_vector), list(labels), ids, k)


class CosineKNNClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, n_neighbors=5):
        self.n_neighbors = n_neighbors

    def fit(self, X, y, ids=None):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        if self.n_neighbors > len(X):
            raise ValueError(f"n_neighbors={self.n_neighbors} exceeds {len(X)} training rows")
        self.X_ = X
        self.y_ = list(y)
        self.ids_ = list(range(len(X))) if ids is None else list(ids)
        self.classes_ = np.unique(y)
        return self

    def _votes(self, X):
        check_is_fitted(self, "X_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return [vote(cosine_distances(self.X_, x), self.y_, self.ids_, self.n_neighbors)
                for x in X]

    def kneighbors(self, X):
        return [nb for _, nb in self._votes(X)]

    def predict(self, X):
        return np.array([lab for lab, _ in self._votes(X)])


__all__ = ["HaarScaleHistogram", "TfidfWeighting", "CosineKNNClassifier", "haar_patient_vector",
           "tfidf_weight", "knn_classify", "cosine_distances", "scale_edges", "idf_vector"]
