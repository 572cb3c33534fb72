"""Small-divisor parameter machinery.

The obstruction to inverting the linearized operator is the set of spectral
shifts theta (and frequencies lambda) where some submatrix develops an
eigenvalue of modulus below N^-tau.  With eps = 0 the matrix is block
diagonal over the time index, so the bad theta set is a union of closed-form
intervals around +/- sqrt(spatial eigenvalue) shifted by lambda omega0 . l;
with eps > 0 those intervals widen by at most eps * ||T''||, and endpoints
are refined by bisection on the true minimum-modulus curve.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import decay_matrix, lattice, linop
from ._parallel import pmap

BISECT_TOL = 1e-12


def diophantine_check(omega0, gamma0, nu, Lmax):
    """Brute-force check of |omega0 . l| >= 2*gamma0*|l|^-nu over
    0 < |l| <= Lmax; returns (ok, report with the worst offender)."""
    if Lmax < 1:
        raise ValueError("Lmax must be >= 1")
    omega0 = np.asarray(omega0, dtype=float)
    worst = None
    ok = True
    for l in itertools.product(range(-Lmax, Lmax + 1), repeat=len(omega0)):
        if all(x == 0 for x in l):
            continue
        ln = max(abs(x) for x in l)
        margin = abs(float(omega0 @ np.array(l))) - 2.0 * gamma0 * ln ** (-float(nu))
        if worst is None or margin < worst["margin"]:
            worst = {"l": l, "margin": margin}
        if margin < 0:
            ok = False
    return ok, worst


@dataclass(frozen=True)
class IntervalCover:
    intervals: tuple          # merged (lo, hi) pairs, lo <= hi
    count_budget: float
    length_budget: float

    @property
    def total_measure(self):
        return sum(hi - lo for lo, hi in self.intervals)

    @property
    def piece_count(self):
        """Number of sub-intervals of length <= length_budget needed to cover
        the merged intervals (the covering definition allows any such
        splitting)."""
        if not self.intervals:
            return 0
        if self.length_budget <= 0:
            return math.inf
        return sum(max(1, math.ceil((hi - lo) / self.length_budget))
                   for lo, hi in self.intervals)

    @property
    def within_budget(self):
        return bool(self.piece_count <= self.count_budget)

    def to_dict(self):
        return {"intervals": [[lo, hi] for lo, hi in self.intervals],
                "total_measure": self.total_measure,
                "count_budget": self.count_budget,
                "length_budget": self.length_budget,
                "piece_count": (None if self.piece_count == math.inf
                                else self.piece_count),
                "within_budget": self.within_budget}


def merge_intervals(pairs, glue=0.0):
    out = []
    for lo, hi in sorted(pairs):
        if out and lo <= out[-1][1] + glue:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return tuple((lo, hi) for lo, hi in out)


def default_theta_bound(geom):
    """Default sweep range bound 2*((2 b1 + 4)^2 + 1)*(b2/b1)^2."""
    b1, b2 = geom.b1, geom.b2
    return 2.0 * ((2 * b1 + 4) ** 2 + 1) * (b2 / b1) ** 2


def theta_matrix(params, N, j0):
    """The centered submatrix at (l0=0, j0) as a function of theta is
    produced by params.with_theta; this returns the site list and a closure
    evaluating its dense form."""
    geom = params.vbar.geom
    j0 = tuple(j0) if j0 is not None else (0,) * geom.r
    sites = lattice.enumerate_box((0,) * geom.nu + j0, N, geom)

    def dense_at(theta):
        return linop.assemble_on_sites(params.with_theta(theta), sites).dense()

    return sites, dense_at


def min_eig_modulus(params, N, j0):
    sites, dense_at = theta_matrix(params, N, j0)

    def g(theta):
        return float(np.min(np.abs(np.linalg.eigvalsh(dense_at(theta)))))

    return g


def _closed_form_intervals(params, N, j0, threshold, theta_range):
    """theta intervals where some eps=0 eigenvalue
    -(lam w0.l + theta)^2 + lam_hat has modulus <= threshold."""
    geom = params.vbar.geom
    _, spat = linop.spatial_block(params, N, j0)
    lam_hats = np.linalg.eigvalsh(spat)
    lo_r, hi_r = theta_range
    pairs = []
    for l in itertools.product(range(-N, N + 1), repeat=geom.nu):
        phase = params.lam * float(np.dot(params.omega0, l))
        for lam_hat in lam_hats:
            top = lam_hat + threshold
            if top < 0:
                continue
            bot = max(lam_hat - threshold, 0.0)
            b = math.sqrt(top)
            a = math.sqrt(bot)
            for seg in ([(-b, -a), (a, b)] if a > 0 else [(-b, b)]):
                lo, hi = seg[0] - phase, seg[1] - phase
                if hi < lo_r or lo > hi_r:
                    continue
                pairs.append((max(lo, lo_r), min(hi, hi_r)))
    return merge_intervals(pairs)


def _bisect(g, threshold, t_in, t_out):
    """Crossing of g(t) = threshold between a point inside (g <= thr) and a
    point outside (g > thr), to absolute tolerance."""
    while abs(t_out - t_in) > BISECT_TOL:
        mid = 0.5 * (t_in + t_out)
        if g(mid) <= threshold:
            t_in = mid
        else:
            t_out = mid
    return 0.5 * (t_in + t_out)


def _refine_intervals(candidates, g, threshold, samples=33):
    """Shrink widened candidate intervals onto the true sublevel set
    {g <= threshold} by sampling and endpoint bisection."""
    out = []
    for lo, hi in candidates:
        ts = np.linspace(lo, hi, samples)
        vals = np.array([g(t) for t in ts])
        inside = vals <= threshold
        k = 0
        while k < samples:
            if not inside[k]:
                k += 1
                continue
            k2 = k
            while k2 + 1 < samples and inside[k2 + 1]:
                k2 += 1
            left = ts[k] if k == 0 else _bisect(g, threshold, ts[k], ts[k - 1])
            right = ts[k2] if k2 == samples - 1 else \
                _bisect(g, threshold, ts[k2], ts[k2 + 1])
            out.append((left, right))
            k = k2 + 1
    return merge_intervals(out)


def bad_theta_cover(params, N, j0, theta_range, mode, mparams, refine=None):
    """Cover of the bad theta set at scale N around spatial center j0.

    mode "exact": closed-form intervals from the spatial-block eigenvalues,
    widened by eps*||T''|| (eigenvalue Lipschitz continuity); when eps != 0
    the endpoints are then refined against the true minimum-modulus curve.
    mode "sweep": adaptive sampling of the minimum-modulus curve with
    bisection at threshold crossings.
    """
    geom = params.vbar.geom
    threshold = float(N) ** (-mparams.tau)
    count_budget = float(N) ** (geom.nu + geom.d + geom.r + 5)
    if threshold == 0.0:
        return IntervalCover((), count_budget, threshold)
    widen = 0.0
    if params.eps != 0.0 and len(params.a):
        j0t = tuple(j0) if j0 is not None else (0,) * geom.r
        sites = lattice.enumerate_box((0,) * geom.nu + j0t, N, geom)
        t2 = decay_matrix.from_multiplier(params.a, sites, sites)
        widen = params.eps * t2.op_norm()
    if refine is None:
        refine = params.eps != 0.0
    if mode == "exact":
        cand = _closed_form_intervals(params, N, j0, threshold + widen,
                                      theta_range)
        if refine and widen > 0.0 and cand:
            g = min_eig_modulus(params, N, j0)
            cand = _refine_intervals(cand, g, threshold)
        return IntervalCover(cand, count_budget, threshold)
    if mode == "sweep":
        g = min_eig_modulus(params, N, j0)
        lo_r, hi_r = theta_range
        # gap estimate from the closed-form centers
        centers = [0.5 * (a + b) for a, b in
                   _closed_form_intervals(params, N, j0, threshold + widen,
                                          (lo_r - 1.0, hi_r + 1.0))]
        gaps = np.diff(sorted(centers))
        gap_est = float(np.min(gaps)) if len(gaps) else 1.0
        step = min(threshold, max(gap_est, 1e-6)) / 8.0
        n_steps = min(int((hi_r - lo_r) / step) + 2, 2_000_000)
        ts = np.linspace(lo_r, hi_r, n_steps)
        vals = np.array(pmap(g, ts))
        inside = vals <= threshold
        pairs = []
        k = 0
        while k < len(ts):
            if not inside[k]:
                k += 1
                continue
            k2 = k
            while k2 + 1 < len(ts) and inside[k2 + 1]:
                k2 += 1
            left = ts[k] if k == 0 else _bisect(g, threshold, ts[k], ts[k - 1])
            right = ts[k2] if k2 == len(ts) - 1 else \
                _bisect(g, threshold, ts[k2], ts[k2 + 1])
            pairs.append((left, right))
            k = k2 + 1
        return IntervalCover(merge_intervals(pairs), count_budget, threshold)
    raise ValueError(f"unknown mode {mode!r}")


def default_j0_list(geom, N):
    """Spatial centers that can meet the sweep range: |j0| up to
    (b1 + 3)/b1 * N (beyond that the bad set misses the theta window)."""
    jmax = math.ceil((geom.b1 + 3.0) / geom.b1 * N)
    lo = 0 if geom.positive_cone else -jmax
    return [j for j in itertools.product(range(lo, jmax + 1), repeat=geom.r)]


def parameter_good(lam, params, N, j0_list, mparams, theta_range=None,
                   threads=None):
    """True iff every listed spatial center has a bad-theta cover fitting the
    count/length budgets."""
    import dataclasses
    params = dataclasses.replace(params, lam=float(lam))
    geom = params.vbar.geom
    if theta_range is None:
        s_bound = default_theta_bound(geom)
        theta_range = (-s_bound, s_bound)

    def one(j0):
        cover = bad_theta_cover(params, N, j0, theta_range, "exact", mparams,
                                refine=False)
        return cover.within_budget

    return all(pmap(one, list(j0_list), threads))


def first_melnikov_gap(params, lam, N0):
    """min over |l| <= N0 and spatial eigenvalues (box radius N0) of
    |-(lam omega0 . l)^2 + lam_hat|."""
    import dataclasses
    params = dataclasses.replace(params, lam=float(lam))
    geom = params.vbar.geom
    _, spat = linop.spatial_block(params, N0)
    lam_hats = np.linalg.eigvalsh(spat)
    best = math.inf
    for l in itertools.product(range(-N0, N0 + 1), repeat=geom.nu):
        phase = params.lam * float(np.dot(params.omega0, l))
        best = min(best, float(np.min(np.abs(-phase * phase + lam_hats))))
    return best


def scan_lambda(params, mparams, N, gamma, N0, grid=512, j0_list=None,
                lambda_range=linop.LAMBDA_RANGE, threads=None):
    """Grid scan over lambda: membership in the first-Melnikov set (gap >=
    gamma*N0^-tau1), the operator-norm set (||A_N^-1||_0 <= N^tau) and the
    N-good-parameter set; reports per-set excluded fractions."""
    import dataclasses
    geom = params.vbar.geom
    lams = np.linspace(lambda_range[0], lambda_range[1], grid)
    if j0_list is None:
        j0_list = default_j0_list(geom, N)
    gap_floor = gamma * float(N0) ** (-mparams.tau1)
    zero_center = (0,) * geom.dims

    def one(lam):
        p = dataclasses.replace(params, lam=float(lam))
        gap = first_melnikov_gap(p, lam, N0)
        in_u = gap >= gap_floor
        a_mat = linop.assemble(p, N)
        dense = a_mat.dense()
        try:
            inv_norm = float(np.linalg.norm(np.linalg.inv(dense), 2))
        except np.linalg.LinAlgError:
            inv_norm = math.inf
        in_u_n = inv_norm <= float(N) ** mparams.tau
        n_good = parameter_good(lam, p, N, j0_list, mparams, threads=1)
        return {"lambda": float(lam), "min_gap": gap, "in_U": bool(in_u),
                "in_U_N": bool(in_u_n), "N_good": bool(n_good)}

    rows = pmap(one, lams, threads)
    frac = lambda key: sum(0 if row[key] else 1 for row in rows) / len(rows)
    summary = {"N": N, "N0": N0, "gamma": gamma, "grid": grid,
               "resolution": 1.0 / grid,
               "excluded_U": frac("in_U"),
               "excluded_U_N": frac("in_U_N"),
               "excluded_N_good": frac("N_good"),
               "params": mparams.log_dict()}
    return rows, summary


def gamma_normalizations(eps0, mparams):
    """Both published normalizations of the smallness-to-gamma bookkeeping
    (they disagree on the Sobolev index; we report both)."""
    return {"gamma_s1": eps0 ** (1.0 / (mparams.s1 + 1.0)),
            "gamma_s2": eps0 ** (1.0 / (mparams.s2 + 1.0))}


def eigenvalue_lipschitz_gap(m1, m2, tol=1e-10):
    """Max shift of sorted eigenvalues vs operator norm of the difference for
    self-adjoint matrices; the shift never exceeds the norm."""
    m1 = np.asarray(m1, dtype=np.complex128)
    m2 = np.asarray(m2, dtype=np.complex128)
    for m in (m1, m2):
        if np.linalg.norm(m - m.conj().T, 2) > tol * max(1.0, np.linalg.norm(m, 2)):
            raise ValueError("matrices must be self-adjoint")
    e1 = np.linalg.eigvalsh(m1)
    e2 = np.linalg.eigvalsh(m2)
    shift = float(np.max(np.abs(e1 - e2)))
    diff = float(np.linalg.norm(m1 - m2, 2))
    return shift, diff
