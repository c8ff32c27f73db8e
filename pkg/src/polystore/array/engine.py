"""Embedded dense array engine.

Arrays are row-major numpy buffers. ``count`` reads metadata, ``multiply``
and the Haar transform are vectorised; ``distinct`` has no value index and
has to materialise and sort every cell.
"""

from __future__ import annotations

import json
import math
import threading
from contextlib import ExitStack
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .._locks import RWLock
from ..errors import CatalogError, LoadError, SchemaError, ShapeError
from ..relational.relation import check_identifier
from . import afl
from .afl import VALUE_ATTR, ArrayType, Call, Num, Pred, Ref
from .haar import dwt_haar, scale_slices


@dataclass
class DenseArray:
    """Named dense array. ``kept`` counts populated (non-NaN) cells."""

    name: str
    dims: tuple  # ((dim name, length), ...)
    values: np.ndarray
    kept: int = -1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dims = tuple((str(n), int(l)) for n, l in self.dims)
        if self.kept < 0:
            self.kept = int(np.count_nonzero(~np.isnan(self.values)))

    @property
    def shape(self):
        return tuple(l for _, l in self.dims)

    @property
    def size(self):
        return int(self.values.size)

    @property
    def rank(self):
        return len(self.dims)

    @property
    def dim_names(self):
        return [n for n, _ in self.dims]

    def type(self) -> ArrayType:
        return ArrayType(self.dims, self.kept < self.size)

    def nbytes(self):
        return int(self.values.nbytes)


def make_array(name, dims, values) -> DenseArray:
    """Validate and build a fully populated array from a flat or shaped sequence."""
    check_identifier(name, "array name")
    dims = tuple(dims)
    if not dims:
        raise SchemaError("an array needs at least one dimension")
    seen = set()
    norm = []
    for d in dims:
        if isinstance(d, dict):
            dname, length = d["name"], d["length"]
        else:
            dname, length = d
        check_identifier(dname, "dimension name")
        if dname == VALUE_ATTR:
            raise SchemaError(f"{VALUE_ATTR!r} is reserved for the cell value")
        if dname in seen:
            raise SchemaError(f"duplicate dimension name {dname!r}")
        seen.add(dname)
        if isinstance(length, bool) or not isinstance(length, (int, np.integer)) or length <= 0:
            raise SchemaError(f"dimension {dname}: length must be a positive integer")
        norm.append((dname, int(length)))
    shape = tuple(l for _, l in norm)
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != math.prod(shape):
        raise SchemaError(f"{arr.size} values do not fill dimensions {shape} "
                          f"({math.prod(shape)} cells)")
    if np.isnan(arr).any():
        raise SchemaError("NaN is reserved as the empty-cell marker")
    return DenseArray(name, tuple(norm), arr.reshape(shape).copy(), math.prod(shape))


class ArrayEngine:
    name = "array"

    def __init__(self):
        self._arrays: dict[str, DenseArray] = {}
        self._locks: dict[str, RWLock] = {}
        self._catalog = threading.Lock()

    def __contains__(self, name):
        return name in self._arrays

    def names(self):
        return sorted(self._arrays)

    def get(self, name) -> DenseArray:
        try:
            return self._arrays[name]
        except KeyError:
            raise CatalogError(f"unknown array {name!r}") from None

    def _lock(self, name):
        with self._catalog:
            return self._locks.setdefault(name, RWLock())

    def store(self, name, dims, values, replace=False) -> DenseArray:
        return self.put(make_array(name, dims, values), replace=replace)

    def put(self, array: DenseArray, replace=False) -> DenseArray:
        check_identifier(array.name, "array name")
        with self._lock(array.name).write():
            with self._catalog:
                if array.name in self._arrays and not replace:
                    raise CatalogError(f"array {array.name!r} already exists")
                self._arrays[array.name] = array
        return array

    def drop(self, name, missing_ok=False):
        if name not in self._arrays:
            if missing_ok:
                return
            raise CatalogError(f"unknown array {name!r}")
        with self._lock(name).write():
            with self._catalog:
                self._arrays.pop(name, None)

    def nbytes(self):
        return sum(a.nbytes() for a in list(self._arrays.values()))

    def export_cells(self, name):
        """Yield ``(index tuple, value)`` for populated cells in row-major order."""
        arr = self.get(name)
        with self._lock(name).read():
            flat = arr.values.ravel()
            for idx, v in zip(np.ndindex(*arr.shape), flat.tolist()):
                if v == v:
                    yield idx, v

    # ------------------------------------------------------------ loading

    def load_file(self, name, source) -> DenseArray:
        """Load the two-line format: JSON header, then comma-separated row-major values."""
        if isinstance(source, (str, Path)) and Path(source).exists():
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = source if isinstance(source, str) else source.read()
        lines = text.splitlines()
        if not lines:
            raise LoadError("missing header", line=1)
        try:
            header = json.loads(lines[0])
            dims = [(d["name"], d["length"]) for d in header["dims"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise LoadError(f"bad header: {exc}", line=1) from None
        body = ",".join(l for l in lines[1:] if l.strip())
        try:
            values = [float(v) for v in body.split(",")] if body.strip() else []
        except ValueError as exc:
            raise LoadError(f"unparseable value: {exc}", line=2) from None
        try:
            return self.store(name or header.get("name"), dims, values)
        except SchemaError as exc:
            raise LoadError(str(exc), line=2) from None

    @staticmethod
    def dump_file(array: DenseArray) -> str:
        header = {"name": array.name,
                  "dims": [{"name": n, "length": l} for n, l in array.dims]}
        return json.dumps(header) + "\n" + ",".join(repr(v) for v in array.values.ravel().tolist()) + "\n"

    # ------------------------------------------------------------ execution

    def shape_of(self, bindings=None):
        bindings = bindings or {}

        def lookup(name):
            return self.get(bindings.get(name, name)).type()
        return lookup

    def execute(self, text, bindings=None):
        """Evaluate an expression; returns a :class:`DenseArray` or an int (``count``)."""
        node = afl.parse(text) if isinstance(text, str) else text
        bindings = bindings or {}
        afl.infer(node, self.shape_of(bindings))
        names = sorted({bindings.get(n, n) for n in afl.array_refs(node)})
        with ExitStack() as stack:
            for n in names:
                stack.enter_context(self._lock(n).read())
            result = self._eval(node, bindings)
        if isinstance(result, DenseArray) and result.name != "result":
            result = DenseArray("result", result.dims, result.values, result.kept)
        return result

    def _eval(self, node, bindings):
        if isinstance(node, Ref):
            return self.get(bindings.get(node.name, node.name))
        op, args = node.op, node.args
        if op == "scan":
            return self._eval(args[0], bindings)
        if op == "count":
            return self._eval(args[0], bindings).kept
        if op == "distinct":
            return distinct(self._eval(args[0], bindings))
        if op == "filter":
            return filter_cells(self._eval(args[0], bindings), args[1])
        if op == "multiply":
            return multiply(self._eval(args[0], bindings), self._eval(args[1], bindings))
        if op == "dwt_haar":
            src = self._eval(args[0], bindings)
            out = dwt_haar(src.values, axis=-1)
            dims = src.dims[:-1] + ((src.dims[-1][0], out.shape[-1]),)
            return DenseArray("result", dims, out, out.size)
        if op == "bin_hist":
            src = self._eval(args[0], bindings)
            edges = self._eval(args[1], bindings)
            nbins = int(args[2].value)
            counts = histogram_by_scale(src.values, edges.values, nbins)
            dims = src.dims[:-1] + (("bin", counts.shape[-1]),)
            return DenseArray("result", dims, counts, counts.size)
        if op == "subarray":
            src = self._eval(args[0], bindings)
            lo, hi = afl.subarray_bounds(args[1:], src.rank)
            sl = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
            vals = src.values[sl].copy()
            dims = tuple((n, b - a + 1) for (n, _), a, b in zip(src.dims, lo, hi))
            return DenseArray("result", dims, vals)
        raise ShapeError(f"unknown operator {op}")


# ---------------------------------------------------------------- operators

def distinct(src: DenseArray) -> DenseArray:
    # No value index: pull every populated cell out and sort.
    vals = src.values.ravel().tolist()
    vals = [v for v in vals if v == v]
    vals.sort()
    out = []
    last = None
    for v in vals:
        if not out or v != last:
            out.append(v)
            last = v
    if not out:
        raise ShapeError("distinct of an array with no populated cells")
    return DenseArray("result", (("i", len(out)),), np.array(out, dtype=np.float64), len(out))


def _operand(src, atom):
    if isinstance(atom, Num):
        return atom.value
    if atom.name == VALUE_ATTR:
        return src.values
    axis = src.dim_names.index(atom.name)
    shape = [1] * src.rank
    shape[axis] = src.shape[axis]
    return np.arange(src.shape[axis]).reshape(shape)


_CMP = {"=": np.equal, "<>": np.not_equal, "<": np.less, "<=": np.less_equal,
        ">": np.greater, ">=": np.greater_equal}


def filter_cells(src: DenseArray, pred: Pred) -> DenseArray:
    mask = ~np.isnan(src.values)
    for c in pred.conjuncts:
        cond = _CMP[c.op](_operand(src, c.left), _operand(src, c.right))
        mask = mask & np.broadcast_to(cond, src.shape)
    out = np.where(mask, src.values, np.nan)
    return DenseArray("result", src.dims, out, int(np.count_nonzero(mask)))


def multiply(a: DenseArray, b: DenseArray) -> DenseArray:
    if a.rank != 2 or b.rank != 2:
        raise ShapeError("multiply needs two rank-2 operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"multiply: inner dimensions differ ({a.shape[1]} vs {b.shape[0]})")
    if a.kept < a.size or b.kept < b.size:
        raise ShapeError("multiply needs fully populated operands")
    out = a.values @ b.values
    return DenseArray("result", afl.product_dims(a.dims, b.dims), out, out.size)


def bin_width(lo: float, hi: float, nbins: int) -> float:
    """Uniform bin width for ``[lo, hi]``; a degenerate range gets width 1."""
    return (hi - lo) / nbins if hi > lo else 1.0


def histogram_by_scale(coeffs, edges, nbins) -> np.ndarray:
    """Per-scale histograms of Haar coefficients, concatenated DC first.

    ``coeffs`` is (..., n) in the layout of :func:`dwt_haar`; ``edges`` is a
    (scales, 2) array of ``[lo, hi]``. A value ``v`` of scale ``s`` lands in
    bin ``floor((v - lo_s) / width_s)`` clamped to ``[0, nbins - 1]``.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    slices = scale_slices(coeffs.shape[-1])
    if edges.shape != (len(slices), 2):
        raise ShapeError(f"expected edges of shape ({len(slices)}, 2), got {edges.shape}")
    lead = coeffs.shape[:-1]
    flat = coeffs.reshape(-1, coeffs.shape[-1])
    out = np.zeros((flat.shape[0], len(slices) * nbins))
    rows = np.arange(flat.shape[0])[:, None]
    for s, sl in enumerate(slices):
        lo, hi = float(edges[s, 0]), float(edges[s, 1])
        width = bin_width(lo, hi, nbins)
        idx = np.floor((flat[:, sl] - lo) / width)
        idx = np.clip(idx, 0, nbins - 1).astype(np.int64) + s * nbins
        np.add.at(out, (np.broadcast_to(rows, idx.shape), idx), 1.0)
    return out.reshape(lead + (len(slices) * nbins,))
