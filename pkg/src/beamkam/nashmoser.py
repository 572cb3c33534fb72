"""Quadratic iteration on Galerkin truncations N, N^2, N^4, ...

Each step linearizes the projected beam equation at the current state,
inverts the linearized matrix (multiscale route when its preconditions hold,
direct factorization otherwise, with the route logged), and contracts the
Taylor-remainder fixed point for the correction.  The certificate records the
truncation ladder, residuals, increments, inversion routes and the
good-parameter membership trail; leaving the good set is reported as a
Cantor exclusion, not a failure.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import lattice, linop, measure, multiscale, sobolev
from .sobolev import FourierField

PICARD_TOL = 1e-14
PICARD_MAX = 200
DENSE_CUTOFF = 2500          # above this, direct solves use sparse LU
MULTISCALE_CUTOFF = 2000     # decay-matrix route capacity


class CantorExclusion(Exception):
    """The frequency parameter left the good set at some scale."""

    def __init__(self, stage, detail):
        super().__init__(f"lambda excluded at {stage}: {detail}")
        self.stage = stage
        self.detail = detail


@dataclass
class SolverConfig:
    geom: object
    m: float
    vbar: FourierField
    fspec: sobolev.NonlinearitySpec
    eps: float
    lam: float
    omega0: tuple
    gamma0: float
    gamma: float
    N0: int
    mparams: multiscale.MultiscaleParams
    tol: float = 1e-10
    max_steps: int = 6
    kappa0: float = 0.0
    s1: float = None
    s2: float = None
    max_dim: int = 80000
    use_multiscale: bool = True
    threads: int = None

    def __post_init__(self):
        if self.s1 is None:
            self.s1 = self.mparams.s1
        if self.s2 is None:
            self.s2 = self.mparams.s2


def validate_config(config):
    """Positivity of the spatial operator and the Diophantine condition are
    hard entry requirements."""
    params = base_params(config, FourierField.zero(config.geom))
    margin = linop.positivity_margin(params, max(config.N0, 16))
    if margin < config.kappa0 or margin <= 0:
        raise ValueError(f"spatial operator positivity fails: smallest "
                         f"eigenvalue {margin:.6g} < kappa0 {config.kappa0}")
    ok, worst = measure.diophantine_check(config.omega0, config.gamma0,
                                          config.geom.nu, Lmax=50)
    if not ok:
        raise ValueError(f"Diophantine condition fails at l = {worst['l']} "
                         f"(margin {worst['margin']:.3g})")
    return {"kappa0_margin": margin, "diophantine_worst": worst}


def base_params(config, u):
    """OperatorParams of the linearization at u (theta = 0)."""
    if config.eps != 0.0:
        a, mbar = sobolev.compose_derivative(config.fspec, u)
        a = a.symmetrized()
    else:
        a, mbar = FourierField.zero(config.geom), 0.0
    return linop.OperatorParams(eps=config.eps, lam=config.lam,
                                omega0=tuple(config.omega0), theta=0.0,
                                m=config.m, vbar=config.vbar, a=a, mbar=mbar)


def linear_part(u, config):
    """L u = (lam w0 . d_phi)^2 u + (squared Laplacian) u + V u, spectrally."""
    geom = config.geom
    out = {}
    for n, c in u.coeffs.items():
        l, j = lattice.split(n, geom)
        phase = config.lam * float(np.dot(config.omega0, l))
        lam_j = lattice.laplacian_eigenvalue(j, geom)
        out[n] = (-phase * phase + lam_j * lam_j + config.m) * c
    lin = FourierField(geom, out)
    if len(config.vbar):
        lin = lin + sobolev.multiply(config.vbar, u)
    return lin


def full_residual_field(u, config):
    """L u - eps F(u) as a field (no truncation)."""
    r = linear_part(u, config)
    if config.eps != 0.0:
        r = r - sobolev.compose(config.fspec, u).scale(config.eps)
    return r


def residual(u, config, N, s):
    """||P_N(L u - eps F(u))||_s, computed spectrally."""
    low, _ = sobolev.project(full_residual_field(u, config), N)
    return sobolev.hs_norm(low, s)


def tail_residual(u, config, N, s):
    """||P^perp_N(Vbar u - eps F(u))||_s; the diagonal part of L has no
    high-mode contribution when u is supported in the box."""
    w = FourierField.zero(config.geom)
    if len(config.vbar):
        w = sobolev.multiply(config.vbar, u)
    if config.eps != 0.0:
        w = w - sobolev.compose(config.fspec, u).scale(config.eps)
    _, high = sobolev.project(w, N)
    return sobolev.hs_norm(high, s)


# -- truncated linear solves ----------------------------------------------

def _box_sites(geom, N):
    axes = []
    for k in range(geom.dims):
        lo = 0 if (geom.positive_cone and k >= geom.nu) else -N
        axes.append(range(lo, N + 1))
    return list(itertools.product(*axes))


def assemble_sparse(params, N):
    """csr form of the linearized matrix on the full box |n| <= N; scales to
    boxes far beyond the dense limit (entries stay within the coefficient
    support of Vbar and a around the diagonal)."""
    geom = params.vbar.geom
    sites = _box_sites(geom, N)
    arr = np.array(sites, dtype=np.int64)
    n_tot = len(sites)
    lo = arr.min(axis=0)
    spans = arr.max(axis=0) - lo + 1
    strides = np.ones(geom.dims, dtype=np.int64)
    for k in range(geom.dims - 2, -1, -1):
        strides[k] = strides[k + 1] * spans[k + 1]
    l_part = arr[:, :geom.nu].astype(float)
    phase = params.lam * (l_part @ np.asarray(params.omega0, dtype=float)) \
        + params.theta
    W = np.array(geom.weights, dtype=float)
    jvec = arr[:, geom.nu:].astype(float) @ W + np.asarray(geom.rho)
    rho = np.asarray(geom.rho)
    lam_j = -np.sum(jvec * jvec, axis=1) + float(rho @ rho)
    diag = -phase * phase + lam_j * lam_j + params.m
    rows = [np.arange(n_tot)]
    cols = [np.arange(n_tot)]
    vals = [diag.astype(np.complex128)]
    couplings = list(params.vbar.coeffs.items())
    if params.eps != 0.0:
        couplings += [(off, -params.eps * c) for off, c in params.a.coeffs.items()]
    for off, c in couplings:
        off = np.array(off, dtype=np.int64)
        tgt = arr - off  # column site n' with n - n' = off
        ok = np.all((tgt >= lo) & (tgt < lo + spans), axis=1)
        if geom.positive_cone:
            ok &= np.all(tgt[:, geom.nu:] >= 0, axis=1)
        src = np.nonzero(ok)[0]
        tgt_idx = (tgt[src] - lo) @ strides
        rows.append(src)
        cols.append(tgt_idx)
        vals.append(np.full(len(src), c, dtype=np.complex128))
    mat = sp.csr_matrix((np.concatenate(vals),
                         (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n_tot, n_tot))
    return sites, mat


def _inv_opnorm_estimate(solve, n, iters=30):
    """Deterministic power iteration for the largest singular value of the
    inverse: iterate v <- inv^H inv v from a fixed start."""
    v = np.ones(n, dtype=np.complex128) / math.sqrt(n)
    sigma = 0.0
    for _ in range(iters):
        w = solve(v)
        w = solve(w, adjoint=True)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        sigma = math.sqrt(nrm)
        v = w / nrm
    return sigma


class TruncatedSolver:
    """Linear solver for the linearized matrix on the box |n| <= N, choosing
    the multiscale route when possible and logging the route taken."""

    def __init__(self, params, N, N_small, config):
        self.geom = params.vbar.geom
        self.N = N
        n_tot = 1
        for k in range(self.geom.dims):
            lo = 0 if (self.geom.positive_cone and k >= self.geom.nu) else -N
            n_tot *= N - lo + 1
        if n_tot > config.max_dim:
            raise RuntimeError(f"truncation dimension {n_tot} exceeds the "
                               f"configured limit {config.max_dim}")
        self.sites, self.csr = assemble_sparse(params, N)
        self.index = {n: i for i, n in enumerate(self.sites)}
        self.route = None
        self.diagnostics = None
        self._inv = None
        self._lu = None
        if config.use_multiscale and n_tot <= MULTISCALE_CUTOFF \
                and N_small is not None and N_small >= 2:
            try:
                a_decay = linop.assemble_on_sites(params, self.sites)
                inv, diag = multiscale.invert(a_decay, N_small, N, config.mparams,
                                              threads=config.threads)
                self._inv = inv.to_csr()
                self.route = "multiscale"
                self.diagnostics = diag
                return
            except (multiscale.InversionError, ValueError) as exc:
                self.fallback_reason = str(exc)
        self._lu = spla.splu(self.csr.tocsc())
        self.route = "direct"

    def solve_vec(self, rhs, adjoint=False):
        if self._inv is not None:
            mat = self._inv.conj().T if adjoint else self._inv
            return mat @ rhs
        return self._lu.solve(rhs, trans="H" if adjoint else "N")

    def solve_field(self, rhs):
        vec = np.zeros(len(self.sites), dtype=np.complex128)
        for n, c in rhs.coeffs.items():
            i = self.index.get(n)
            if i is not None:
                vec[i] = c
        out = self.solve_vec(vec)
        # no pruning: late-iteration corrections sit below the storage prune
        # threshold yet are exactly what removes the residual floor
        return FourierField(self.geom,
                            {n: complex(out[i]) for i, n in enumerate(self.sites)
                             if out[i] != 0.0})

    def inverse_opnorm(self):
        n = len(self.sites)
        if self._inv is not None and n <= 2000:
            return float(np.linalg.norm(self._inv.toarray(), 2)), "dense"
        if self._lu is not None and n <= 2000:
            eye = np.eye(n, dtype=np.complex128)
            return float(np.linalg.norm(self._lu.solve(eye), 2)), "dense"
        return _inv_opnorm_estimate(self.solve_vec, n), "power-iteration"


# -- the iteration ---------------------------------------------------------

@dataclass
class IterationState:
    n: int
    N_n: int
    u: FourierField
    history: list = field(default_factory=list)


def initial_solve(config):
    """Contraction at the initial truncation: fixed point of
    u -> eps * Linv P_N0 F(u)."""
    geom = config.geom
    if config.eps == 0.0:
        return FourierField.zero(geom), {"steps": 0, "route": "zero"}
    gap = measure.first_melnikov_gap(base_params(config, FourierField.zero(geom)),
                                     config.lam, config.N0)
    floor = config.gamma * float(config.N0) ** (-config.mparams.tau1)
    if gap < floor:
        raise CantorExclusion("initial-gap",
                              f"first-Melnikov gap {gap:.3g} < {floor:.3g}")
    params0 = linop.OperatorParams(eps=0.0, lam=config.lam,
                                   omega0=tuple(config.omega0), theta=0.0,
                                   m=config.m, vbar=config.vbar,
                                   a=FourierField.zero(geom))
    solver = TruncatedSolver(params0, config.N0, None, config)
    u = FourierField.zero(geom)
    prev_inc = math.inf
    for k in range(PICARD_MAX):
        rhs, _ = sobolev.project(sobolev.compose(config.fspec, u), config.N0)
        u_new = solver.solve_field(rhs.scale(config.eps))
        inc = sobolev.hs_norm(u_new - u, config.s1)
        u = u_new
        if inc < PICARD_TOL:
            return u, {"steps": k + 1, "route": solver.route,
                       "u0_s1": sobolev.hs_norm(u, config.s1)}
        if inc >= prev_inc and k > 3:
            raise RuntimeError(f"initial contraction stalled: increment "
                               f"{inc:.3g} after {k + 1} steps")
        prev_inc = inc
    raise RuntimeError("initial contraction did not reach tolerance")


def iterate_step(state, config):
    """One quadratic step: solve the linearized equation on the squared
    truncation for the correction h and append the step record."""
    geom = config.geom
    N_next = state.N_n * state.N_n
    params = base_params(config, state.u)
    solver = TruncatedSolver(params, N_next, state.N_n, config)

    # good-set membership at the new scale
    inv_norm, norm_route = solver.inverse_opnorm()
    bound = float(N_next) ** config.mparams.tau
    record = {"n": state.n + 1, "N": N_next,
              "inversion_path": solver.route,
              "inv_opnorm": inv_norm, "inv_opnorm_route": norm_route,
              "inv_opnorm_bound": bound}
    if inv_norm > bound:
        raise CantorExclusion(f"step-{state.n + 1}",
                              f"||Linv||_0 = {inv_norm:.3g} > N^tau = {bound:.3g}")

    # data of the projected equation: the full residual at the current state
    # projected to the new scale.  Its dominant part is the tail carried over
    # from the previous truncation (low modes are solved to Picard tolerance,
    # not exactly, so they are kept rather than assumed zero).
    r_n, _ = sobolev.project(full_residual_field(state.u, config), N_next)
    f_u = (sobolev.compose(config.fspec, state.u) if config.eps != 0.0
           else FourierField.zero(geom))

    a_field = params.a
    h = FourierField.zero(geom)
    prev_inc = math.inf
    picard_steps = 0
    for k in range(PICARD_MAX):
        if config.eps != 0.0 and len(h):
            f_uh = sobolev.compose(config.fspec, state.u + h)
            df_h = sobolev.multiply(a_field, h)
            taylor = (f_uh - f_u - df_h).scale(-config.eps)
            taylor, _ = sobolev.project(taylor, N_next)
        else:
            taylor = FourierField.zero(geom)
        rhs = (taylor + r_n).scale(-1.0)
        h_new = solver.solve_field(rhs)
        inc = sobolev.hs_norm(h_new - h, config.s1)
        h = h_new
        picard_steps = k + 1
        if inc < PICARD_TOL:
            break
        if inc >= prev_inc and k > 3:
            raise RuntimeError(f"step {state.n + 1} Picard stalled at "
                               f"increment {inc:.3g}")
        prev_inc = inc
    u_next = (state.u + h)
    record["picard_steps"] = picard_steps
    record["increment_s1"] = sobolev.hs_norm(h, config.s1)
    record["u_s2_norm"] = sobolev.hs_norm(u_next, config.s2)
    if solver.diagnostics is not None:
        record["multiscale"] = {k: v for k, v in solver.diagnostics.items()
                                if k in ("good_count", "bad_count", "clusters",
                                         "conclusion_bound_holds")}
    state.history.append(record)
    return IterationState(state.n + 1, N_next, u_next, state.history)


def solve(config):
    """Full run: validation, initial contraction, quadratic steps until the
    projected residual plus the truncation tail falls below tolerance."""
    checks = validate_config(config)
    certificate = {"config_checks": checks,
                   "mparams": config.mparams.log_dict(),
                   "eps": config.eps, "lambda": config.lam,
                   "N0": config.N0, "tol": config.tol,
                   "steps": [], "status": "running"}
    if config.eps == 0.0:
        certificate["status"] = "converged"
        certificate["residual_s1"] = 0.0
        return FourierField.zero(config.geom), certificate
    try:
        u, init_info = initial_solve(config)
    except CantorExclusion as exc:
        certificate["status"] = "cantor-excluded"
        certificate["exclusion"] = {"stage": exc.stage, "detail": exc.detail}
        return FourierField.zero(config.geom), certificate
    certificate["initial"] = init_info
    state = IterationState(0, config.N0, u)
    res = residual(u, config, state.N_n, config.s1)
    tail = tail_residual(u, config, state.N_n, config.s1)
    inc0 = sobolev.hs_norm(u, config.s1)
    state.history.append({"n": 0, "N": config.N0, "inversion_path": "initial",
                          "residual_s1": res, "tail_s1": tail,
                          "increment_s1": inc0,
                          "u_s2_norm": sobolev.hs_norm(u, config.s2)})
    for _ in range(config.max_steps):
        if res + tail <= config.tol:
            certificate["status"] = "converged"
            break
        try:
            state = iterate_step(state, config)
        except CantorExclusion as exc:
            certificate["status"] = "cantor-excluded"
            certificate["exclusion"] = {"stage": exc.stage, "detail": exc.detail}
            break
        except RuntimeError as exc:
            certificate["status"] = "numerical-failure"
            certificate["failure"] = str(exc)
            break
        res = residual(state.u, config, state.N_n, config.s1)
        tail = tail_residual(state.u, config, state.N_n, config.s1)
        state.history[-1]["residual_s1"] = res
        state.history[-1]["tail_s1"] = tail
    else:
        certificate["status"] = ("converged" if res + tail <= config.tol
                                 else "max-steps")
    certificate["steps"] = state.history
    certificate["residual_s1"] = res
    certificate["tail_s1"] = tail
    certificate["final_N"] = state.N_n
    certificate["u_s1_norm"] = sobolev.hs_norm(state.u, config.s1)
    return state.u, certificate
