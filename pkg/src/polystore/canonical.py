"""Engine-neutral result comparison.

Engines return rows in whatever order their operators produce them. Tests
and the training-phase oracle sort before comparing; normal output is never
reordered.
"""

from __future__ import annotations

import math

import numpy as np

from .array.engine import DenseArray
from .keyvalue import Document
from .relational.relation import Relation


def _sort_key(row):
    out = []
    for v in row:
        if isinstance(v, str):
            out.append((1, v))
        elif isinstance(v, float) and v != 0 and math.isfinite(v):
            # Rounding keeps last-bit noise from reordering otherwise equal rows.
            out.append((0, float(f"{v:.9g}")))
        else:
            out.append((0, v))
    return out


def canonicalize(result):
    """Return a plain, order-free form of an engine result."""
    if isinstance(result, bool):
        raise TypeError("boolean results are not produced by any engine")
    if isinstance(result, (int, float, np.integer, np.floating)):
        return ("scalar", float(result))
    if isinstance(result, DenseArray):
        vals = [None if v != v else v for v in result.values.ravel().tolist()]
        return ("array", tuple(result.dims), tuple(vals))
    if isinstance(result, Relation):
        rows = sorted((tuple(float(v) if isinstance(v, int) else v for v in r) for r in result.rows),
                      key=_sort_key)
        return ("relation", tuple(result.columns), tuple(rows))
    if isinstance(result, list) and all(isinstance(d, Document) for d in result):
        docs = sorted((d.key, tuple(sorted(d.fields.items()))) for d in result)
        return ("documents", tuple(docs))
    if result is None:
        return ("none",)
    raise TypeError(f"cannot canonicalize {type(result).__name__}")


def _close(a, b, rel, abs_tol):
    if isinstance(a, float) and isinstance(b, float):
        return math.isclose(a, b, rel_tol=rel, abs_tol=abs_tol)
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(_close(x, y, rel, abs_tol) for x, y in zip(a, b))
    return a == b


def results_equivalent(a, b, rel=1e-9, abs_tol=1e-12) -> bool:
    """True when two results agree up to row order and float rounding."""
    return _close(canonicalize(a), canonicalize(b), rel, abs_tol)
