"""Orthonormal discrete Haar transform.

Coefficients are laid out as ``[DC, coarsest detail, ..., finest details]``:
scale ``s`` (1-based, coarse to fine) holds ``2**(s-1)`` coefficients at
offsets ``2**(s-1) .. 2**s - 1``. With this normalisation the transform is
orthogonal, so it preserves energy and its inverse is its transpose.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

_SQRT2 = math.sqrt(2.0)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def truncate_pow2(x: np.ndarray, axis=-1) -> np.ndarray:
    """Drop trailing samples so the length along ``axis`` is a power of two."""
    n = x.shape[axis]
    if n == 0:
        raise ValueError("cannot transform an empty signal")
    if is_power_of_two(n):
        return x
    keep = 1 << (n.bit_length() - 1)
    warnings.warn(f"Haar transform: truncating length {n} to {keep}", RuntimeWarning,
                  stacklevel=3)
    return np.take(x, np.arange(keep), axis=axis)


def dwt_haar(x, axis=-1) -> np.ndarray:
    """Forward transform along ``axis``; other axes are independent signals."""
    x = np.asarray(x, dtype=np.float64)
    x = np.moveaxis(truncate_pow2(x, axis), axis, -1)
    n = x.shape[-1]
    out = np.empty_like(x)
    approx = x
    while n > 1:
        even, odd = approx[..., 0::2], approx[..., 1::2]
        out[..., n // 2:n] = (even - odd) / _SQRT2
        approx = (even + odd) / _SQRT2
        n //= 2
    out[..., 0:1] = approx
    return np.moveaxis(out, -1, axis)


def idwt_haar(coeffs, axis=-1) -> np.ndarray:
    """Inverse of :func:`dwt_haar`."""
    c = np.moveaxis(np.asarray(coeffs, dtype=np.float64), axis, -1)
    n = c.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"coefficient length {n} is not a power of two")
    approx = c[..., 0:1]
    size = 1
    while size < n:
        detail = c[..., size:2 * size]
        nxt = np.empty(c.shape[:-1] + (2 * size,))
        nxt[..., 0::2] = (approx + detail) / _SQRT2
        nxt[..., 1::2] = (approx - detail) / _SQRT2
        approx = nxt
        size *= 2
    return np.moveaxis(approx, -1, axis)


def scale_slices(n: int) -> list[slice]:
    """Coefficient ranges per scale: DC first, then details coarse to fine."""
    if not is_power_of_two(n):
        raise ValueError(f"length {n} is not a power of two")
    out = [slice(0, 1)]
    size = 1
    while size < n:
        out.append(slice(size, 2 * size))
        size *= 2
    return out


def n_scales(n: int) -> int:
    return len(scale_slices(n))


def scale_of_index(i: int) -> int:
    """Scale number (0 = DC) of coefficient offset ``i``."""
    return 0 if i == 0 else i.bit_length()
