"""Fourier-coefficient fields u(phi, x) on the product torus, their weighted
Sobolev norms, projectors, products, and composition with a nonlinearity
f(phi, x, u).

A field is a finite complex coefficient map over lattice sites; real-valued
functions have conjugate-symmetric coefficients.  Products convolve
coefficient maps exactly; composition evaluates on a collocation grid sized
so polynomial nonlinearities are alias-free.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels, lattice

# Coefficients below this modulus are dropped after nonlinear operations to
# bound support growth; far below every solver tolerance.
PRUNE = 1e-14  # relative coefficient floor: thresholds scale with the
               # largest coefficient of the result, sitting above FFT
               # roundoff noise while keeping every coefficient that can
               # influence weighted residual norms

NORM_FACTOR = 2.0 * math.pi  # ||u_n||_0^2 = 2*pi*|u_n|^2


class FourierField:
    """Immutable sparse coefficient map site -> complex."""

    __slots__ = ("geom", "coeffs")

    def __init__(self, geom, coeffs, prune=0.0):
        if prune:
            coeffs = {n: c for n, c in coeffs.items() if abs(c) > prune}
        self.geom = geom
        self.coeffs = dict(coeffs)

    @staticmethod
    def zero(geom):
        return FourierField(geom, {})

    @property
    def support_radius(self):
        if not self.coeffs:
            return 0
        return max(lattice.site_norm(n, self.geom) for n in self.coeffs)

    def __len__(self):
        return len(self.coeffs)

    def get(self, site):
        return self.coeffs.get(site, 0.0j)

    def items(self):
        return sorted(self.coeffs.items())

    def key_arrays(self):
        if not self.coeffs:
            return (np.empty((0, self.geom.dims), dtype=np.int64),
                    np.empty(0, dtype=np.complex128))
        items = self.items()
        keys = np.array([n for n, _ in items], dtype=np.int64)
        vals = np.array([c for _, c in items], dtype=np.complex128)
        return keys, vals

    def __add__(self, other):
        _check_same_geometry(self, other)
        out = dict(self.coeffs)
        for n, c in other.coeffs.items():
            out[n] = out.get(n, 0.0j) + c
        # drop exact cancellations only: magnitude pruning here would discard
        # the tiny late-iteration corrections sums are used to apply
        return FourierField(self.geom,
                            {n: c for n, c in out.items() if c != 0.0})

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, factor):
        return FourierField(self.geom, {n: factor * c for n, c in self.coeffs.items()})

    def is_real(self, tol=1e-12):
        for n, c in self.coeffs.items():
            neg = tuple(-x for x in n)
            if abs(c - np.conj(self.coeffs.get(neg, 0.0j))) > tol:
                return False
        return True

    def symmetrized(self):
        """Project onto real-valued functions: average c_n with conj(c_{-n})."""
        out = {}
        for n, c in self.coeffs.items():
            neg = tuple(-x for x in n)
            sym = 0.5 * (c + np.conj(self.coeffs.get(neg, 0.0j)))
            if sym != 0.0:
                out[n] = sym
                # the mirror coefficient must exist even when the input had
                # no support there, or the output is not conjugate-symmetric
                out.setdefault(neg, np.conj(sym))
        return FourierField(self.geom, out)


def _check_same_geometry(u, v):
    if u.geom is not v.geom and u.geom != v.geom:
        raise ValueError("fields live on different geometries")


def hs_norm(u, s):
    """Weighted Sobolev norm: sqrt(sum <w_n>^(2s) * 2*pi*|u_n|^2)."""
    if s < 0:
        raise ValueError("s must be >= 0")
    total = 0.0
    for n, c in u.coeffs.items():
        w = lattice.weight_norm(n, u.geom)
        total += w ** (2.0 * s) * NORM_FACTOR * abs(c) ** 2
    return math.sqrt(total)


def project(u, N):
    """Split u into (modes with |n| <= N, modes with |n| > N); exact."""
    if N < 0:
        raise ValueError("N must be >= 0")
    low, high = {}, {}
    for n, c in u.coeffs.items():
        (low if lattice.site_norm(n, u.geom) <= N else high)[n] = c
    return FourierField(u.geom, low), FourierField(u.geom, high)


def multiply(u, v):
    """Pointwise product via exact sparse convolution of coefficients."""
    _check_same_geometry(u, v)
    ka, va = u.key_arrays()
    kb, vb = v.key_arrays()
    tol = 0.0
    if len(va) and len(vb):
        tol = PRUNE * float(np.max(np.abs(va))) * float(np.max(np.abs(vb)))
    keys, vals = _kernels.convolve(ka, va, kb, vb, tol)
    return FourierField(u.geom, {tuple(int(x) for x in k): complex(c)
                                 for k, c in zip(keys, vals)})


def _next_pow2(n):
    return 1 << max(2, int(n - 1).bit_length())


def eval_grid(u, L):
    """Values of u on the uniform collocation grid with L points per axis."""
    dims = u.geom.dims
    A = np.zeros((L,) * dims, dtype=np.complex128)
    for n, c in u.coeffs.items():
        A[tuple(int(x) % L for x in n)] += c
    return np.fft.ifftn(A) * (L ** dims)


def grid_to_field(vals, geom, radius=None, prune=PRUNE):
    """Inverse of eval_grid: coefficients from grid values, indices unwrapped
    to [-L/2, L/2); optionally truncated to |n| <= radius."""
    L = vals.shape[0]
    dims = geom.dims
    C = np.fft.fftn(vals) / (L ** dims)
    mag = np.abs(C)
    idx = np.argwhere(mag > prune * (mag.max() if mag.size else 0.0))
    out = {}
    for raw in idx:
        n = tuple(int(x) if x < L // 2 else int(x) - L for x in raw)
        if radius is not None and max(abs(x) for x in n) > radius:
            continue
        out[n] = complex(C[tuple(raw)])
    return FourierField(geom, out)


@dataclass(frozen=True)
class NonlinearitySpec:
    """Nonlinearity f(phi, x, u).

    kind "polynomial": f = sum_k coeff_k(phi, x) * u^k with terms a tuple of
    (power, coefficient) where the coefficient is a FourierField or a scalar.
    kind "callable": func(phi_axes, x_axes, u_values) evaluated on the grid;
    dfu is the u-derivative callable (required for linearization).
    q records the differentiability order (metadata only).
    """

    kind: str
    terms: tuple = ()
    func: object = None
    dfu: object = None
    q: int = 6
    grid: int = 0

    def max_degree(self):
        return max((p for p, _ in self.terms), default=0)

    def coeff_radius(self, geom):
        rad = 0
        for _, g in self.terms:
            if isinstance(g, FourierField):
                rad = max(rad, g.support_radius)
        return rad

    def derivative(self):
        if self.kind == "polynomial":
            terms = tuple((p - 1, _scale_term(g, p))
                          for p, g in self.terms if p >= 1)
            return NonlinearitySpec("polynomial", terms=terms, q=max(self.q - 1, 0))
        if self.dfu is None:
            raise ValueError("callable nonlinearity needs an explicit dfu")
        return NonlinearitySpec("callable", func=self.dfu, q=max(self.q - 1, 0),
                                grid=self.grid)


def _scale_term(g, p):
    if isinstance(g, FourierField):
        return g.scale(float(p))
    return float(p) * g


def _grid_size_for(fspec, u):
    ru = max(u.support_radius, 1)
    bound = fspec.max_degree() * ru + max(fspec.coeff_radius(u.geom), 1)
    return _next_pow2(4 * max(bound, 1))


def compose(fspec, u):
    """Coefficients of f(phi, x, u(phi, x)); alias-free for polynomial f."""
    geom = u.geom
    if fspec.kind == "polynomial":
        L = _grid_size_for(fspec, u)
        ug = eval_grid(u, L).real
        out = np.zeros_like(ug)
        for p, g in fspec.terms:
            gg = eval_grid(g, L).real if isinstance(g, FourierField) else float(g)
            out = out + gg * ug ** p
        return grid_to_field(out, geom)
    if fspec.kind == "callable":
        L = fspec.grid or _next_pow2(8 * max(u.support_radius, 4))
        if not fspec.grid:
            warnings.warn("callable nonlinearity sampled on a heuristic grid; "
                          "aliasing is not certified", stacklevel=2)
        dims = geom.dims
        axes = np.meshgrid(*[np.linspace(0.0, 2 * math.pi, L, endpoint=False)
                             for _ in range(dims)], indexing="ij")
        ug = eval_grid(u, L).real
        vals = fspec.func(axes[:geom.nu], axes[geom.nu:], ug)
        return grid_to_field(np.asarray(vals, dtype=float), geom)
    raise ValueError(f"unknown nonlinearity kind {fspec.kind!r}")


def compose_derivative(fspec, u):
    """Field a = (d/du f)(phi, x, u) along u and its space-time mean."""
    a = compose(fspec.derivative(), u)
    zero = (0,) * u.geom.dims
    return a, float(a.get(zero).real)


def to_records(u):
    """JSON-ready record list; scalar blocks are emitted as length-1 arrays."""
    geom = u.geom
    recs = []
    for n, c in u.items():
        l, j = lattice.split(n, geom)
        recs.append({"l": [int(x) for x in l], "j": [int(x) for x in j],
                     "re": [float(c.real)], "im": [float(c.imag)]})
    return recs


def from_records(recs, geom):
    out = {}
    for rec in recs:
        n = tuple(int(x) for x in rec["l"]) + tuple(int(x) for x in rec["j"])
        out[n] = complex(rec["re"][0], rec["im"][0])
    return FourierField(geom, out)
