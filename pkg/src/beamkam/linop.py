"""Assembly of the linearized-operator matrices.

The linearization of the beam equation at a state u, in Fourier variables and
with the frequency split omega = lambda * omega0 and spectral shift theta, is
the self-adjoint matrix

    A(eps, lambda, u, theta) = D + T' - eps * T''

with diagonal mu_n = -(lambda omega0 . l + theta)^2 + lam_j^2 + m, Toeplitz
part T' from the zero-mean potential Vbar and T'' from a = (df/du)(phi, x, u).
Shifting theta by lambda omega0 . l0 is the same as recentering the time
index by l0 (covariance), which is what makes single-site theta analysis
control whole matrix lines.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from . import decay_matrix, lattice
from .decay_matrix import DecayMatrix
from .sobolev import FourierField

LAMBDA_RANGE = (0.5, 1.5)


@dataclass(frozen=True)
class OperatorParams:
    eps: float
    lam: float
    omega0: tuple
    theta: float
    m: float
    vbar: FourierField
    a: FourierField
    mbar: float = 0.0

    def __post_init__(self):
        if not (LAMBDA_RANGE[0] <= self.lam <= LAMBDA_RANGE[1]):
            raise ValueError(f"lambda {self.lam} outside {LAMBDA_RANGE}")
        if float(np.linalg.norm(self.omega0)) > 1.0 + 1e-12:
            raise ValueError("need |omega0| <= 1")
        geom = self.vbar.geom
        zero = (0,) * geom.dims
        if abs(self.vbar.get(zero)) > 1e-12:
            raise ValueError("Vbar must have zero mean; put the mean into m")

    def with_theta(self, theta):
        return replace(self, theta=float(theta))


def rho_exponent(geom):
    """Derivative loss of the multiplier-norm bound: (2 nu + d + r + 1)/2."""
    return (2 * geom.nu + geom.d + geom.r + 1) / 2.0


def diagonal_entry(site, params, geom):
    """mu_n = -(lambda omega0 . l + theta)^2 + lam_j^2 + m."""
    l, j = lattice.split(site, geom)
    phase = params.lam * float(np.dot(params.omega0, l)) + params.theta
    lam_j = lattice.laplacian_eigenvalue(j, geom)
    return -phase * phase + lam_j * lam_j + params.m


def assemble_on_sites(params, sites, k0=None):
    """A = D + T' - eps T'' restricted to the given (sorted) site list."""
    geom = params.vbar.geom
    sites = tuple(sorted(sites))
    diag = np.array([diagonal_entry(n, params, geom) for n in sites],
                    dtype=np.complex128)
    a_mat = DecayMatrix.diagonal(geom, sites, diag, k0)
    if len(params.vbar):
        a_mat = a_mat + decay_matrix.from_multiplier(params.vbar, sites, sites, k0)
    if params.eps != 0.0 and len(params.a):
        a_mat = a_mat - decay_matrix.from_multiplier(
            params.a, sites, sites, k0).scale(params.eps)
    return a_mat


def assemble(params, N, l0=None, j0=None, k0=None):
    """Submatrix on the box |l - l0| <= N, |j - j0| <= N."""
    geom = params.vbar.geom
    l0 = tuple(l0) if l0 is not None else (0,) * geom.nu
    j0 = tuple(j0) if j0 is not None else (0,) * geom.r
    sites = lattice.enumerate_box(l0 + j0, N, geom)
    return assemble_on_sites(params, sites, k0)


def offdiagonal_part(a_mat):
    """Q = A - Diag(A)."""
    keep = a_mat.rows != a_mat.cols
    return DecayMatrix(a_mat.geom, a_mat.row_sites, a_mat.col_sites,
                       a_mat.rows[keep], a_mat.cols[keep], a_mat.vals[keep],
                       a_mat.k0)


def diagonal_values(a_mat):
    diag = np.zeros(len(a_mat.row_sites), dtype=np.complex128)
    on = a_mat.rows == a_mat.cols
    np.add.at(diag, a_mat.rows[on], a_mat.vals[on])
    return diag


def spatial_block(params, N, j0=None):
    """Matrix of the spatial operator (squared Laplacian + V) on the modes
    |j - j0| <= N; its eigenvalues are the lam-hat_{j,p} of the theta
    analysis, and its smallest eigenvalue is the positivity margin kappa0."""
    geom = params.vbar.geom
    j0 = tuple(j0) if j0 is not None else (0,) * geom.r
    axes = []
    for k in range(geom.r):
        lo, hi = j0[k] - N, j0[k] + N
        if geom.positive_cone:
            lo = max(lo, 0)
        axes.append(range(lo, hi + 1))
    js = sorted(itertools.product(*axes))
    n = len(js)
    mat = np.zeros((n, n), dtype=np.complex128)
    for i, j in enumerate(js):
        lam_j = lattice.laplacian_eigenvalue(j, geom)
        mat[i, i] = lam_j * lam_j + params.m
    zero_l = (0,) * geom.nu
    for i, ja in enumerate(js):
        for k, jb in enumerate(js):
            off = zero_l + tuple(int(x) - int(y) for x, y in zip(ja, jb))
            c = params.vbar.coeffs.get(off)
            if c is not None:
                mat[i, k] += c
    return js, mat


def positivity_margin(params, N):
    """Smallest eigenvalue of the spatial block on |j| <= N (must be >= kappa0
    for an accepted configuration)."""
    _, mat = spatial_block(params, N)
    return float(np.linalg.eigvalsh(mat)[0])
