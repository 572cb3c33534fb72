"""Command-line entry point.

Subcommands: solve (full iteration with certificate), scan-lambda (parameter
grid scan), bad-theta (resonant-interval cover), invert (multiscale inversion
diagnostics on an assembled matrix), verify (decay-norm property suite).

Configuration is a JSON file with blocks geometry / potential / nonlinearity /
frequency / solver / multiscale / output; every output artifact echoes the
fully resolved configuration so runs are reproducible from the artifact alone.
Exit codes: 0 success, 1 configuration/validation error, 2 numerical failure,
3 parameter excluded from the good set.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import lattice, lemma_suite, linop, measure, multiscale, nashmoser, sobolev
from .sobolev import FourierField

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_EXCLUDED = 3


class ConfigError(ValueError):
    """Configuration problem, reported with the offending field path."""


_MISSING = object()


def _get(block, key, path, default=_MISSING, kind=None):
    if key not in block:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}: required field missing")
        return default
    val = block[key]
    if kind is not None:
        try:
            val = kind(val)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.{key}: cannot interpret {val!r}")
    return val


def _field_from(value, geom, path):
    """A Fourier field from a coefficient record list (or 0.0 / missing)."""
    if value is None:
        return FourierField.zero(geom)
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list of coefficient records")
    try:
        return sobolev.from_records(value, geom)
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"{path}: bad coefficient record ({exc})")


def load_config(path):
    """Parse and validate a config file into a resolved SolverConfig plus the
    fully-resolved echo dict."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected an object")

    g = raw.get("geometry", {})
    nu = _get(g, "nu", "geometry", 1, int)
    d = _get(g, "d", "geometry", 1, int)
    r = _get(g, "r", "geometry", d, int)
    preset = _get(g, "preset", "geometry", "torus", str)
    try:
        geom = lattice.make_geometry(
            nu=nu, d=d, r=r, preset=preset,
            weights=g.get("weights"), rho=g.get("rho"),
            z=g.get("z", 1))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"geometry: {exc}")

    p = raw.get("potential", {})
    m = _get(p, "m", "potential", kind=float)
    kappa0 = _get(p, "kappa0", "potential", 0.0, float)
    vbar = _field_from(p.get("vbar"), geom, "potential.vbar")
    if not vbar.is_real():
        raise ConfigError("potential.vbar: coefficients must describe a real "
                          "potential (conjugate-symmetric)")

    f = raw.get("nonlinearity", {})
    kind = _get(f, "kind", "nonlinearity", "polynomial", str)
    if kind != "polynomial":
        raise ConfigError("nonlinearity.kind: only 'polynomial' is supported "
                          "in configuration files")
    terms = []
    for i, term in enumerate(_get(f, "terms", "nonlinearity", [], list)):
        tpath = f"nonlinearity.terms[{i}]"
        power = _get(term, "power", tpath, kind=int)
        if power < 0:
            raise ConfigError(f"{tpath}.power: must be >= 0")
        coeff = term.get("coeff", 1.0)
        if isinstance(coeff, list):
            coeff = _field_from(coeff, geom, f"{tpath}.coeff")
        else:
            coeff = float(coeff)
        terms.append((power, coeff))
    fspec = sobolev.NonlinearitySpec("polynomial", terms=tuple(terms),
                                     q=_get(f, "q", "nonlinearity", 6, int))

    fr = raw.get("frequency", {})
    omega0 = tuple(float(x) for x in _get(fr, "omega0", "frequency",
                                          kind=list))
    if len(omega0) != nu:
        raise ConfigError(f"frequency.omega0: expected {nu} components")
    gamma0 = _get(fr, "gamma0", "frequency", 0.1, float)
    lam = _get(fr, "lambda", "frequency", 1.0, float)

    s = raw.get("solver", {})
    eps = _get(s, "eps", "solver", kind=float)
    eps0 = _get(s, "eps0", "solver", abs(eps) if eps else 1e-3, float)

    ms = raw.get("multiscale", {})
    try:
        mparams = multiscale.MultiscaleParams.from_geometry(
            geom, **{k: float(v) for k, v in ms.items()})
    except TypeError as exc:
        raise ConfigError(f"multiscale: {exc}")

    gamma = _get(s, "gamma", "solver",
                 measure.gamma_normalizations(eps0, mparams)["gamma_s2"],
                 float)
    n0_preset = max(2, int(round(32.0 / gamma)))
    N0 = _get(s, "N0", "solver", n0_preset, int)
    if N0 < 2:
        raise ConfigError("solver.N0: must be >= 2")

    config = nashmoser.SolverConfig(
        geom=geom, m=m, vbar=vbar, fspec=fspec, eps=eps, lam=lam,
        omega0=omega0, gamma0=gamma0, gamma=gamma, N0=N0, mparams=mparams,
        tol=_get(s, "tol", "solver", 1e-10, float),
        max_steps=_get(s, "max_steps", "solver", 6, int),
        kappa0=kappa0)

    resolved = {
        "geometry": {"nu": nu, "d": d, "r": r, "preset": preset},
        "potential": {"m": m, "kappa0": kappa0,
                      "vbar": sobolev.to_records(vbar)},
        "nonlinearity": {
            "kind": "polynomial", "q": fspec.q,
            "terms": [{"power": pw,
                       "coeff": (sobolev.to_records(c)
                                 if isinstance(c, FourierField) else c)}
                      for pw, c in fspec.terms]},
        "frequency": {"omega0": list(omega0), "gamma0": gamma0,
                      "lambda": lam},
        "solver": {"eps": eps, "eps0": eps0, "gamma": gamma, "N0": N0,
                   "tol": config.tol, "max_steps": config.max_steps},
        "multiscale": mparams.log_dict(),
        "output": raw.get("output", {}),
    }
    return config, resolved


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path, rows, fields):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in fields})


def _out_dir(args, resolved=None):
    if args.out:
        return Path(args.out)
    if resolved and resolved.get("output", {}).get("dir"):
        return Path(resolved["output"]["dir"])
    return Path(".")


def _require_config(args):
    if not args.config:
        raise ConfigError("this subcommand needs --config")
    return load_config(args.config)


# -- subcommands ----------------------------------------------------------


def cmd_solve(args):
    config, resolved = _require_config(args)
    config.threads = args.threads
    out = _out_dir(args, resolved)
    try:
        u, certificate = nashmoser.solve(config)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if not isinstance(exc, ValueError) \
            else EXIT_CONFIG
    certificate["resolved_config"] = resolved
    _write_json(out / "certificate.json", certificate)
    _write_json(out / "solution.json", sobolev.to_records(u))
    print(f"status: {certificate['status']}  "
          f"residual_s1: {certificate.get('residual_s1'):.3e}")
    if certificate["status"] == "converged":
        return EXIT_OK
    if certificate["status"] == "cantor-excluded":
        return EXIT_EXCLUDED
    return EXIT_NUMERICAL


def cmd_scan_lambda(args):
    config, resolved = _require_config(args)
    out = _out_dir(args, resolved)
    params = nashmoser.base_params(config, FourierField.zero(config.geom))
    rows, summary = measure.scan_lambda(
        params, config.mparams, N=args.N, gamma=config.gamma, N0=config.N0,
        grid=args.grid, threads=args.threads)
    summary["resolved_config"] = resolved
    _write_csv(out / "scan.csv", rows,
               ["lambda", "min_gap", "in_U", "in_U_N", "N_good"])
    _write_json(out / "scan_summary.json", summary)
    print(f"excluded fractions: U {summary['excluded_U']:.4f}  "
          f"U_N {summary['excluded_U_N']:.4f}  "
          f"N-good {summary['excluded_N_good']:.4f}")
    return EXIT_OK


def cmd_bad_theta(args):
    config, resolved = _require_config(args)
    out = _out_dir(args, resolved)
    geom = config.geom
    j0 = tuple(int(x) for x in args.j0.split(",")) if args.j0 else None
    if j0 is not None and len(j0) != geom.r:
        print(f"error: --j0 needs {geom.r} components", file=sys.stderr)
        return EXIT_CONFIG
    bound = args.theta_bound or measure.default_theta_bound(geom)
    params = nashmoser.base_params(config, FourierField.zero(geom))
    cover = measure.bad_theta_cover(params, args.N, j0,
                                    (-bound, bound), args.mode,
                                    config.mparams)
    doc = cover.to_dict()
    doc.update({"N": args.N, "j0": list(j0) if j0 else [0] * geom.r,
                "mode": args.mode, "theta_bound": bound,
                "resolved_config": resolved})
    _write_json(out / "bad_theta.json", doc)
    print(f"{len(cover.intervals)} interval(s), measure "
          f"{cover.total_measure:.6g}, within_budget={cover.within_budget}")
    return EXIT_OK


def cmd_invert(args):
    config, resolved = _require_config(args)
    out = _out_dir(args, resolved)
    params = nashmoser.base_params(config, FourierField.zero(config.geom))
    a_mat = linop.assemble(params, args.Nprime)
    mparams = multiscale.with_measured_theta(config.mparams, a_mat)
    try:
        inv, diagnostics = multiscale.invert(a_mat, args.N, args.Nprime,
                                             mparams, threads=args.threads)
    except multiscale.InversionError as exc:
        print(f"inversion failed: {exc}", file=sys.stderr)
        _write_json(out / "invert.json",
                    {"status": "failed", "stage": exc.stage,
                     "message": str(exc), "resolved_config": resolved})
        return EXIT_NUMERICAL
    diagnostics["status"] = "ok"
    diagnostics["resolved_config"] = resolved
    _write_json(out / "invert.json", diagnostics)
    print(f"inverted dim {diagnostics['dim']}: residual "
          f"{diagnostics.get('residual_fro', float('nan')):.3e}")
    return EXIT_OK


def cmd_verify(args):
    report = lemma_suite.run_suite(seed=args.seed, n_per_check=args.count,
                                   threads=args.threads)
    print(lemma_suite.format_report(report))
    if args.out:
        _write_json(Path(args.out) / "verify.json", report)
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


# -- dispatch -------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="beamkam",
        description="Quasi-periodic solutions of the forced beam equation: "
                    "multiscale linear inversion, parameter scans and the "
                    "quadratic iteration.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--seed", type=int, default=0,
                        help="seed for all randomized work")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: BEAMKAM_THREADS or 1)")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("solve", help="run the full iteration")
    common(sp)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("scan-lambda", help="grid scan of the good sets")
    common(sp)
    sp.add_argument("--N", type=int, default=4, help="matrix scale")
    sp.add_argument("--grid", type=int, default=512, help="lambda grid size")
    sp.set_defaults(fn=cmd_scan_lambda)

    sp = sub.add_parser("bad-theta", help="resonant-interval cover")
    common(sp)
    sp.add_argument("--N", type=int, default=8, help="matrix scale")
    sp.add_argument("--j0", help="spatial center, comma-separated integers")
    sp.add_argument("--mode", choices=("exact", "sweep"), default="exact")
    sp.add_argument("--theta-bound", type=float, default=None,
                    help="half-width of the theta window")
    sp.set_defaults(fn=cmd_bad_theta)

    sp = sub.add_parser("invert", help="multiscale inversion diagnostics")
    common(sp)
    sp.add_argument("--N", type=int, default=4, help="small scale")
    sp.add_argument("--Nprime", type=int, default=8, help="matrix scale")
    sp.set_defaults(fn=cmd_invert)

    sp = sub.add_parser("verify", help="decay-norm property suite")
    common(sp)
    sp.add_argument("--count", type=int, default=200,
                    help="instances per check")
    sp.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        os.environ["BEAMKAM_THREADS"] = str(args.threads)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except nashmoser.CantorExclusion as exc:
        print(f"excluded: {exc}", file=sys.stderr)
        return EXIT_EXCLUDED


if __name__ == "__main__":
    sys.exit(main())
