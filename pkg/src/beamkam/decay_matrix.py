"""Block matrices between site sets with the off-diagonal decay norm.

The decay norm weights, at each lattice offset, the worst block operator norm
found at that offset: |M|_s^2 = K0 * sum_off [M(off)]^2 * <off>^(2s) with
<off> = max(1, |off|).  Finiteness of the norm encodes polynomial decay away
from the diagonal, which is what survives multiplication, inversion on good
boxes, and the Neumann perturbation arguments.

Entries are stored as parallel (row, col, value) arrays keyed into the sorted
site lists; blocks are scalar (see lattice module notes).
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import _kernels, lattice

DENSE_LIMIT = 5000  # matrices above this are rejected, not approximated

NEUMANN_REL_TOL = 1e-14
NEUMANN_MAX_TERMS = 500


@lru_cache(maxsize=None)
def _k0_cached(dims, two_s0):
    radius = 200
    s = 1.0
    for k in range(1, radius + 1):
        cnt = (2 * k + 1) ** dims - (2 * k - 1) ** dims
        s += cnt * k ** (-two_s0)
    if two_s0 <= dims:
        raise ValueError("decay-norm series diverges: need 2*s0 > nu + r")
    # cnt(k) <= 2*dims*3^(dims-1)*k^(dims-1); integral tail bound
    tail = (2 * dims * 3 ** (dims - 1)
            * radius ** (dims - two_s0) / (two_s0 - dims))
    return 4.0 * (s + tail) * 1.01


def default_s0(geom):
    return geom.nu + geom.d


def k0_constant(geom, s0=None):
    """Normalization constant: strictly above 4 * sum <n>^(-2 s0) over the
    full product lattice (series truncated at radius 200 plus tail bound)."""
    if s0 is None:
        s0 = default_s0(geom)
    return _k0_cached(geom.dims, 2.0 * float(s0))


def _site_array(sites, dims):
    if not sites:
        return np.empty((0, dims), dtype=np.int64)
    return np.array(sites, dtype=np.int64)


class DecayMatrix:
    __slots__ = ("geom", "row_sites", "col_sites", "rows", "cols", "vals",
                 "k0", "_row_arr", "_col_arr", "_row_map", "_col_map")

    def __init__(self, geom, row_sites, col_sites, rows, cols, vals, k0=None):
        self.geom = geom
        self.row_sites = tuple(row_sites)
        self.col_sites = tuple(col_sites)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=np.complex128)
        self.k0 = k0 if k0 is not None else k0_constant(geom)
        self._row_arr = _site_array(self.row_sites, geom.dims)
        self._col_arr = _site_array(self.col_sites, geom.dims)
        self._row_map = None
        self._col_map = None

    def row_index(self):
        if self._row_map is None:
            self._row_map = {n: i for i, n in enumerate(self.row_sites)}
        return self._row_map

    def col_index(self):
        if self._col_map is None:
            self._col_map = {n: i for i, n in enumerate(self.col_sites)}
        return self._col_map

    # -- constructors -----------------------------------------------------

    @staticmethod
    def from_blocks(geom, row_sites, col_sites, blocks, k0=None):
        """blocks: map (row site, col site) -> complex."""
        row_sites = tuple(sorted(row_sites))
        col_sites = tuple(sorted(col_sites))
        ri = {n: i for i, n in enumerate(row_sites)}
        ci = {n: i for i, n in enumerate(col_sites)}
        items = sorted(blocks.items())
        rows = [ri[a] for (a, b), _ in items]
        cols = [ci[b] for (a, b), _ in items]
        vals = [v for _, v in items]
        return DecayMatrix(geom, row_sites, col_sites, rows, cols, vals, k0)

    @staticmethod
    def from_dense(geom, row_sites, col_sites, array, k0=None, prune=0.0):
        array = np.asarray(array, dtype=np.complex128)
        mask = np.abs(array) > prune
        rows, cols = np.nonzero(mask)
        return DecayMatrix(geom, row_sites, col_sites, rows, cols,
                           array[rows, cols], k0)

    @staticmethod
    def identity(geom, sites, k0=None):
        n = len(sites)
        idx = np.arange(n)
        return DecayMatrix(geom, sites, sites, idx, idx,
                           np.ones(n, dtype=np.complex128), k0)

    @staticmethod
    def diagonal(geom, sites, values, k0=None):
        n = len(sites)
        idx = np.arange(n)
        return DecayMatrix(geom, sites, sites, idx, idx, values, k0)

    # -- basic access -----------------------------------------------------

    @property
    def shape(self):
        return (len(self.row_sites), len(self.col_sites))

    def block(self, row_site, col_site):
        r = self.row_sites.index(row_site)
        c = self.col_sites.index(col_site)
        hit = (self.rows == r) & (self.cols == c)
        return complex(self.vals[hit].sum())

    def to_csr(self):
        return sp.csr_matrix((self.vals, (self.rows, self.cols)),
                             shape=self.shape)

    def dense(self):
        return self.to_csr().toarray()

    def scale(self, factor):
        return DecayMatrix(self.geom, self.row_sites, self.col_sites,
                           self.rows, self.cols, factor * self.vals, self.k0)

    def adjoint(self):
        return DecayMatrix(self.geom, self.col_sites, self.row_sites,
                           self.cols, self.rows, np.conj(self.vals), self.k0)

    def __add__(self, other):
        if (self.row_sites != other.row_sites
                or self.col_sites != other.col_sites):
            raise ValueError("site-set mismatch in matrix sum")
        # csr addition coalesces duplicate (row, col) entries, which the
        # per-offset sup in s_norm requires
        coo = (self.to_csr() + other.to_csr()).tocoo()
        return DecayMatrix(self.geom, self.row_sites, self.col_sites,
                           coo.row, coo.col, coo.data, self.k0)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def submatrix(self, row_sites, col_sites):
        row_sites = tuple(sorted(row_sites))
        col_sites = tuple(sorted(col_sites))
        rfull, cfull = self.row_index(), self.col_index()
        rmap = np.full(len(self.row_sites), -1, dtype=np.int64)
        for i, n in enumerate(row_sites):
            rmap[rfull[n]] = i
        cmap = np.full(len(self.col_sites), -1, dtype=np.int64)
        for i, n in enumerate(col_sites):
            cmap[cfull[n]] = i
        keep = (rmap[self.rows] >= 0) & (cmap[self.cols] >= 0)
        return DecayMatrix(self.geom, row_sites, col_sites,
                           rmap[self.rows[keep]], cmap[self.cols[keep]],
                           self.vals[keep], self.k0)

    # -- norms ------------------------------------------------------------

    def offset_profile(self):
        """(offsets, sups): worst block magnitude at each lattice offset,
        honoring the positive-cone offset convention."""
        if len(self.vals) == 0:
            return (np.empty((0, self.geom.dims), dtype=np.int64),
                    np.empty(0, dtype=np.float64))
        rk = self._row_arr[self.rows]
        ck = self._col_arr[self.cols]
        if self.geom.positive_cone:
            off = rk - ck
            bad = (off[:, self.geom.nu:] < 0).any(axis=1)
            off[bad] = 0
            rk, ck = off, np.zeros_like(off)
        return _kernels.offset_reduce_max(
            np.ascontiguousarray(rk), np.ascontiguousarray(ck),
            np.abs(self.vals))

    def s_norm(self, s):
        if s < 0:
            raise ValueError("s must be >= 0")
        offs, sups = self.offset_profile()
        if len(sups) == 0:
            return 0.0
        mag = np.maximum(np.max(np.abs(offs), axis=1), 1)
        return math.sqrt(self.k0 * float(np.sum(sups ** 2 * mag ** (2.0 * s))))

    def op_norm(self):
        n, m = self.shape
        if max(n, m) > DENSE_LIMIT:
            raise ValueError(f"matrix too large for dense operator norm "
                             f"({max(n, m)} > {DENSE_LIMIT})")
        if n == 0 or m == 0 or len(self.vals) == 0:
            return 0.0
        return float(np.linalg.norm(self.dense(), 2))

    # -- algebra ----------------------------------------------------------

    def matmul(self, other):
        if self.col_sites != other.row_sites:
            raise ValueError("inner site sets do not match")
        prod = (self.to_csr() @ other.to_csr()).tocoo()
        return DecayMatrix(self.geom, self.row_sites, other.col_sites,
                           prod.row, prod.col, prod.data, self.k0)

    def __matmul__(self, other):
        return self.matmul(other)

    def apply(self, h):
        """Matrix-vector product onto a Fourier field supported on col_sites."""
        from .sobolev import FourierField
        ci = {n: i for i, n in enumerate(self.col_sites)}
        vec = np.zeros(len(self.col_sites), dtype=np.complex128)
        for n, c in h.coeffs.items():
            if n not in ci:
                raise ValueError(f"field support {n} outside column sites")
            vec[ci[n]] = c
        out = self.to_csr() @ vec
        return FourierField(self.geom, {n: complex(out[i])
                                        for i, n in enumerate(self.row_sites)
                                        if out[i] != 0})


def from_multiplier(g, row_sites, col_sites, k0=None):
    """Toeplitz matrix of the multiplication operator u -> g*u: entry at
    (n, n') is the g-coefficient at the offset n - n'."""
    geom = g.geom
    row_sites = tuple(sorted(row_sites))
    col_sites = tuple(sorted(col_sites))
    rows, cols, vals = [], [], []
    coeffs = g.coeffs
    for ic, cn in enumerate(col_sites):
        for ir, rn in enumerate(row_sites):
            off = tuple(int(a) - int(b) for a, b in zip(rn, cn))
            c = coeffs.get(off)
            if c is not None:
                rows.append(ir)
                cols.append(ic)
                vals.append(c)
    return DecayMatrix(geom, row_sites, col_sites, rows, cols,
                       np.array(vals, dtype=np.complex128), k0)


def perturb_left_inverse(minv, p, s0=None):
    """Left inverse of M + P by the Neumann series sum_k (-Minv P)^k Minv,
    given a left inverse Minv of M and a perturbation small in either the
    s0-decay norm or the L2 operator norm."""
    geom = minv.geom
    if s0 is None:
        s0 = default_s0(geom)
    small_s = minv.s_norm(s0) * p.s_norm(s0) <= 0.5 + 1e-12
    small_0 = False
    if not small_s:
        try:
            small_0 = minv.op_norm() * p.op_norm() <= 0.5 + 1e-12
        except ValueError:
            small_0 = False
    if not (small_s or small_0):
        raise ValueError("left-inverse perturbation too large: neither the "
                         "s0-norm nor the operator-norm smallness holds")
    mp = (minv @ p).scale(-1.0)
    term = minv
    total = minv
    total_norm = minv.s_norm(s0)
    for _ in range(NEUMANN_MAX_TERMS):
        term = mp @ term
        total = total + term
        tnorm = term.s_norm(s0)
        total_norm = max(total_norm, total.s_norm(s0))
        if tnorm < NEUMANN_REL_TOL * max(total_norm, 1e-300):
            return total
    raise ValueError("Neumann series stalled in left-inverse perturbation")
