"""Pure-numpy kernels, used when the compiled core is unavailable.

Both backends accumulate in the same flattened (i, j) order and emit rows in
lexicographic order, so results are bit-identical across backends.
"""

import numpy as np


def _empty(k):
    return np.empty((0, k), dtype=np.int64), np.empty(0, dtype=np.complex128)


def convolve(keys_a, vals_a, keys_b, vals_b, tol):
    """Sparse convolution: sum_{a+b=n} va*vb over integer key rows.
    Returns (keys, vals) with keys lexsorted and |val| <= tol dropped."""
    k = keys_a.shape[1]
    if len(vals_a) == 0 or len(vals_b) == 0:
        return _empty(k)
    keys = (keys_a[:, None, :] + keys_b[None, :, :]).reshape(-1, k)
    # explicit real arithmetic: numpy's complex-multiply ufunc rounds
    # differently from the compiled backend's (ar*br - ai*bi, ar*bi + ai*br)
    ar, ai = vals_a.real[:, None], vals_a.imag[:, None]
    br, bi = vals_b.real[None, :], vals_b.imag[None, :]
    vals = ((ar * br - ai * bi) + 1j * (ar * bi + ai * br)).ravel()
    uk, inv = np.unique(keys, axis=0, return_inverse=True)
    acc = np.zeros(len(uk), dtype=np.complex128)
    np.add.at(acc, inv.ravel(), vals)
    keep = np.abs(acc) > tol
    return np.ascontiguousarray(uk[keep]), acc[keep]


def offset_reduce_max(row_keys, col_keys, mags):
    """Per-offset maximum: offsets row-col with the max of mags over equal
    offsets.  Returns (offsets lexsorted, sups)."""
    k = row_keys.shape[1]
    if len(mags) == 0:
        return np.empty((0, k), dtype=np.int64), np.empty(0, dtype=np.float64)
    off = row_keys - col_keys
    uk, inv = np.unique(off, axis=0, return_inverse=True)
    sup = np.zeros(len(uk), dtype=np.float64)
    np.maximum.at(sup, inv.ravel(), mags)
    return np.ascontiguousarray(uk), sup
