"""Index lattice for space-time Fourier modes.

A site packs the time-frequency index l (nu integers) and the spatial lattice
coordinates j (r integers) into one flat tuple (l_1..l_nu, j_1..j_r).  The
spatial point lives in weight space, j -> sum_k j_k w_k + rho, which is where
Euclidean norms and Laplacian eigenvalues are computed; the torus preset uses
the standard basis so coordinates and weight space coincide.

Sites are totally ordered lexicographically so every matrix layout and every
parallel reduction downstream is deterministic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

Site = tuple  # flat (l..., j...) integer tuple


@dataclass(frozen=True)
class LatticeGeometry:
    nu: int
    d: int
    r: int
    weights: tuple          # r row vectors in R^r
    rho: tuple              # vector in R^r
    z: int                  # rationality scale: w_k . w_k' in Z/z
    positive_cone: bool     # True: j_k >= 0 only; False: all of Z^r
    c1: float
    c2: float
    b1: float
    b2: float

    @property
    def dims(self):
        return self.nu + self.r

    def weight_matrix(self):
        return np.array(self.weights, dtype=float).T  # columns are w_k


def _scan_norm_constants(nu, r, W, rho, positive_cone, radius=50):
    # Brute-force ratio scan over a large box; vectorized over the j-lattice
    # only since the l-part always uses the Euclidean/sup-norm pair.
    rng = range(0, radius + 1) if positive_cone else range(-radius, radius + 1)
    js = np.array(list(itertools.product(rng, repeat=r)), dtype=float)
    jvec = js @ W  # rows of W are the weight vectors
    jnorm = np.linalg.norm(jvec + rho, axis=1)
    jsup = np.max(np.abs(js), axis=1)
    mask = jsup > 0
    b1 = float(np.min(np.linalg.norm(jvec[mask], axis=1) / jsup[mask]))
    b2 = float(np.max(np.linalg.norm(jvec[mask], axis=1) / jsup[mask]))
    # c1, c2 compare sqrt(||l||^2 + ||j+rho||^2) with max(|l|_sup, |j|_sup);
    # scan l-sup and j-sup jointly.  For the l-part Euclidean-vs-sup gives
    # [1, sqrt(nu)] exactly, so only the spatial profile needs the scan.
    lo, hi = np.inf, 0.0
    for lsup in range(0, radius + 1):
        lnorm_lo, lnorm_hi = float(lsup), math.sqrt(nu) * lsup
        n = np.maximum(lsup, jsup)
        ok = n > 0
        val_lo = np.sqrt(lnorm_lo**2 + jnorm**2)
        val_hi = np.sqrt(lnorm_hi**2 + jnorm**2)
        lo = min(lo, float(np.min(val_lo[ok] / n[ok])))
        hi = max(hi, float(np.max(val_hi[ok] / n[ok])))
    return lo, hi, b1, b2


def make_geometry(nu, d, r, weights=None, rho=None, z=1, preset="torus"):
    """Validate and build a geometry.  preset "torus" fixes weights to the
    standard basis, rho = 0 and the full lattice Z^r; preset "cone" keeps the
    positive-cone index set with user-supplied weights."""
    if r < 1 or nu < 1:
        raise ValueError("need nu >= 1 and r >= 1")
    if preset == "torus":
        weights = tuple(tuple(float(i == k) for i in range(r)) for k in range(r))
        rho = (0.0,) * r
        return LatticeGeometry(nu, d, r, weights, rho, z, False,
                               1.0, math.sqrt(nu + r), 1.0, math.sqrt(r))
    if weights is None:
        raise ValueError("cone preset needs explicit weights")
    W = np.array(weights, dtype=float)
    if W.shape != (r, r):
        raise ValueError("need r weight vectors of length r")
    if abs(np.linalg.det(W)) < 1e-12:
        raise ValueError("weights are linearly dependent")
    gram = W @ W.T
    if np.max(np.abs(gram * z - np.round(gram * z))) > 1e-12:
        raise ValueError("weight products violate the rationality scale z")
    rho = tuple(float(x) for x in (rho if rho is not None else (0.0,) * r))
    c1, c2, b1, b2 = _scan_norm_constants(nu, r, W, np.array(rho), True)
    return LatticeGeometry(nu, d, r, tuple(tuple(map(float, w)) for w in W),
                           rho, z, True, c1, c2, b1, b2)


def split(site, geom):
    return site[:geom.nu], site[geom.nu:]


def site_norm(site, geom):
    """Sup norm max{|l|, |j|} over the flat coordinates."""
    return max(abs(int(x)) for x in site)


def site_distance(a, b, geom):
    return max(abs(int(x) - int(y)) for x, y in zip(a, b))


def site_offset(a, b, geom):
    """Offset a - b used by the decay norm.  On a positive-cone lattice an
    offset whose j-part leaves the cone is identified with 0 (documented
    quirk of the norm's offset convention)."""
    off = tuple(int(x) - int(y) for x, y in zip(a, b))
    if geom.positive_cone and any(x < 0 for x in off[geom.nu:]):
        return (0,) * geom.dims
    return off


def weight_vector(j, geom):
    W = np.array(geom.weights, dtype=float)
    return np.array(j, dtype=float) @ W


def weight_norm(site, geom):
    """Smoothed Euclidean size max{c1, 1, sqrt(||l||^2 + ||j+rho||^2)}."""
    l, j = split(site, geom)
    jr = weight_vector(j, geom) + np.array(geom.rho)
    val = math.sqrt(float(np.dot(l, l)) + float(np.dot(jr, jr)))
    return max(geom.c1, 1.0, val)


def laplacian_eigenvalue(j, geom):
    """Eigenvalue -||j+rho||^2 + ||rho||^2 of the Laplacian on the mode j."""
    jr = weight_vector(j, geom) + np.array(geom.rho)
    rho = np.array(geom.rho)
    return -float(np.dot(jr, jr)) + float(np.dot(rho, rho))


def _axis_ranges(center, N, geom, region=None):
    ranges = []
    for k in range(geom.dims):
        lo, hi = center[k] - N, center[k] + N
        if region is not None:
            lo, hi = max(lo, region[k][0]), min(hi, region[k][1])
        if geom.positive_cone and k >= geom.nu:
            lo = max(lo, 0)
        ranges.append(range(int(lo), int(hi) + 1))
    return ranges


def enumerate_box(center, N, geom, region=None):
    """All sites with |site - center| <= N, optionally intersected with a
    per-axis region [(lo, hi), ...], in lexicographic order."""
    if N < 0:
        raise ValueError("N must be >= 0")
    return [s for s in itertools.product(*_axis_ranges(center, N, geom, region))]


def clamped_window(c, N, lo, hi):
    """1-D window of width exactly 2N around c, shifted to sit inside
    [lo, hi]; degenerates to the whole interval when it is shorter than 2N."""
    if hi - lo <= 2 * N:
        return lo, hi
    a = c - N
    a = max(a, lo)
    a = min(a, hi - 2 * N)
    return a, a + 2 * N


def enumerate_clamped_box(center, N, geom, region):
    """Box of diameter exactly min(2N, region width) per axis containing the
    center, shifted inside the region instead of truncated at its boundary."""
    ranges = []
    for k in range(geom.dims):
        lo, hi = region[k]
        if geom.positive_cone and k >= geom.nu:
            lo = max(lo, 0)
        a, b = clamped_window(center[k], N, lo, hi)
        ranges.append(range(int(a), int(b) + 1))
    return [s for s in itertools.product(*ranges)]


def region_of_box(center, N, geom):
    """Per-axis region covered by enumerate_box(center, N)."""
    reg = []
    for k in range(geom.dims):
        lo, hi = center[k] - N, center[k] + N
        if geom.positive_cone and k >= geom.nu:
            lo = max(lo, 0)
        reg.append((lo, hi))
    return tuple(reg)
