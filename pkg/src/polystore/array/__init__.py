"""Embedded dense array engine with a small functional operator language."""

from .engine import ArrayEngine, DenseArray, make_array
from .haar import dwt_haar, idwt_haar

__all__ = ["ArrayEngine", "DenseArray", "make_array", "dwt_haar", "idwt_haar"]
