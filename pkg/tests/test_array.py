import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from polystore.array import afl
from polystore.array.engine import ArrayEngine, make_array
from polystore.array.haar import dwt_haar, idwt_haar, scale_slices
from polystore.errors import CatalogError, LoadError, ParseError, SchemaError, ShapeError


def haar_matrix(n):
    """Orthonormal Haar matrix built by the Kronecker recursion (row order: DC, coarse -> fine)."""
    h = np.array([[1.0]])
    while h.shape[0] < n:
        m = h.shape[0]
        top = np.kron(h, [1.0, 1.0])
        bottom = np.kron(np.eye(m), [1.0, -1.0])
        h = np.vstack([top, bottom]) / math.sqrt(2)
    return h


@pytest.fixture
def eng():
    e = ArrayEngine()
    e.store("A", [("i", 2), ("j", 3)], [1, 2, 3, 4, 5, 6])
    return e


def test_store_2x3_count_metadata(eng):
    assert eng.get("A").kept == 6
    assert eng.execute("count(A)") == 6


def test_length_mismatch():
    with pytest.raises(SchemaError):
        make_array("B", [("i", 2), ("j", 2)], range(6))


def test_zero_length_dim_rejected():
    with pytest.raises(SchemaError):
        make_array("B", [("i", 0)], [])


def test_duplicate_name(eng):
    with pytest.raises(CatalogError):
        eng.store("A", [("i", 1)], [0.0])


def test_multiply_identity():
    e = ArrayEngine()
    e.store("A", [("i", 2), ("k", 2)], [[1, 2], [3, 4]])
    e.store("I", [("k", 2), ("j", 2)], np.eye(2))
    assert e.execute("multiply(A, I)").values.tolist() == [[1, 2], [3, 4]]


def test_multiply_shape_mismatch(eng):
    with pytest.raises(ShapeError):
        eng.execute("multiply(A, A)")


def test_dwt_constant_signal():
    e = ArrayEngine()
    e.store("S", [("t", 4)], [1, 1, 1, 1])
    np.testing.assert_allclose(e.execute("dwt_haar(S)").values, [2, 0, 0, 0], atol=1e-15)


def test_distinct_sorted():
    e = ArrayEngine()
    e.store("V", [("i", 3)], [2, 1, 1])
    assert e.execute("distinct(V)").values.tolist() == [1, 2]


def test_filter_sentinel_and_kept(eng):
    out = eng.execute("filter(A, val > 2)")
    assert out.kept == 4
    assert np.isnan(out.values[0, 0]) and out.values[1, 2] == 6
    assert eng.execute("count(filter(A, val > 2))") == 4


def test_subarray(eng):
    assert eng.execute("subarray(A, 0, 1, 0, 2)").values.tolist() == [[2, 3]]


def test_export_cells():
    e = ArrayEngine()
    e.store("R", [("i", 1), ("j", 2)], [[1.5, 2.5]])
    assert list(e.export_cells("R")) == [((0, 0), 1.5), ((0, 1), 2.5)]
    e.store("One", [("i", 1), ("j", 1)], [[7.0]])
    assert list(e.export_cells("One")) == [((0, 0), 7.0)]


def test_export_restore_round_trip():
    e = ArrayEngine()
    e.store("R", [("i", 2), ("j", 2)], [[1, 2], [3, 4]])
    cells = list(e.export_cells("R"))
    vals = np.zeros((2, 2))
    for idx, v in cells:
        vals[idx] = v
    e.store("R2", e.get("R").dims, vals)
    assert np.array_equal(e.get("R2").values, e.get("R").values)


def test_file_round_trip(eng):
    text = ArrayEngine.dump_file(eng.get("A"))
    e2 = ArrayEngine()
    arr = e2.load_file("A", text)
    assert arr.dims == eng.get("A").dims and np.array_equal(arr.values, eng.get("A").values)


def test_file_bad_header():
    with pytest.raises(LoadError) as err:
        ArrayEngine().load_file("X", "not json\n1,2\n")
    assert err.value.line == 1


def test_unknown_array(eng):
    with pytest.raises(CatalogError):
        eng.execute("count(Nope)")


@pytest.mark.parametrize("bad", ["count(", "count(A", "multiply(A,)", "count(A))", "bogus(A)",
                                 "count(A, A)"])
def test_parse_errors(bad, eng):
    with pytest.raises((ParseError, ShapeError)):
        eng.execute(bad)


def test_truncation_warns():
    with pytest.warns(RuntimeWarning):
        out = dwt_haar(np.arange(6.0))
    assert out.shape == (4,)


def test_scale_slices_coarse_to_fine():
    assert scale_slices(8) == [slice(0, 1), slice(1, 2), slice(2, 4), slice(4, 8)]


# ---------------------------------------------------------------- Haar oracle and properties

@pytest.mark.parametrize("n", [2, 4, 8, 16, 64, 256])
def test_dwt_matches_haar_matrix(n):
    x = np.random.default_rng(n).normal(size=n)
    np.testing.assert_allclose(dwt_haar(x), haar_matrix(n) @ x, rtol=0, atol=1e-12)


def test_haar_matrix_is_orthonormal():
    h = haar_matrix(16)
    np.testing.assert_allclose(h @ h.T, np.eye(16), atol=1e-14)


signals = st.integers(1, 9).flatmap(
    lambda p: hnp.arrays(np.float64, 2 ** p, elements=st.floats(-1e3, 1e3)))


@settings(max_examples=100, deadline=None)
@given(signals)
def test_parseval(x):
    c = dwt_haar(x)
    e = float(x @ x)
    assert math.isclose(float(c @ c), e, rel_tol=1e-9, abs_tol=1e-9)


@settings(max_examples=100, deadline=None)
@given(signals)
def test_inverse_reconstructs(x):
    assert np.max(np.abs(idwt_haar(dwt_haar(x)) - x), initial=0) <= 1e-9 * max(1.0, np.abs(x).max())


mats = st.integers(1, 5).flatmap(lambda n: st.tuples(
    hnp.arrays(np.float64, (n, n), elements=st.floats(-10, 10)),
    hnp.arrays(np.float64, (n, n), elements=st.floats(-10, 10)),
    hnp.arrays(np.float64, (n, n), elements=st.floats(-10, 10))))


@settings(max_examples=60, deadline=None)
@given(mats)
def test_multiply_bilinear(abc):
    a, b, c = abc
    e = ArrayEngine()
    n = a.shape[0]
    e.store("A", [("i", n), ("k", n)], a)
    e.store("B", [("k", n), ("j", n)], b)
    e.store("C", [("k", n), ("j", n)], c)
    e.store("BC", [("k", n), ("j", n)], b + c)
    lhs = e.execute("multiply(A, BC)").values
    rhs = e.execute("multiply(A, B)").values + e.execute("multiply(A, C)").values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 30), elements=st.floats(-5, 5)))
def test_count_equals_true_filter_kept(v):
    e = ArrayEngine()
    e.store("V", [("i", len(v))], v)
    assert e.execute("count(V)") == e.execute("filter(V, val = val)").kept


def test_afl_array_refs():
    assert sorted(afl.array_refs(afl.parse("multiply($c0, B)"))) == ["$c0", "B"]
