"""Command-line entry point: ``fracheat <command> [options]``.

Human-readable progress goes to stderr.  Each run emits one JSON manifest:
written to ``<out>/manifest.json`` when ``--out`` is given, printed to
stdout otherwise.  Exit status is 0 when every check passes, 1 when a check
fails and 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy

from . import __version__
from .classify import (ProblemSpec, SingularDataSpec, classify_regime, necessary_condition_scan,
                       power_witness_exponent, witness_integrability, witness_radial)
from .field import Field, GridSpec, check_jensen, fit_smoothing_slope, sample_radial
from .kernel import gaussian_profile, kernel_profile, kernel_radial_quadrature, poisson_profile
from .nonlinearity import (LEMMAS, HypothesisViolation, check_inequality_lemmas,
                           make_nonlinearity)
from .solver import CONVERGED, EvolutionConfig, iterate_monotone, residual
from .supersolution import (VARIANTS, QuadratureNotConverged, RegimeViolation, check_regime,
                            find_certificate, make_params, verify_supersolution)
from .sweep import SweepPlan, run_sweep


class UsageError(Exception):
    """Bad flags or an invalid configuration (exit status 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(2, f"\n{self.prog}: error: {message}\n")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# ------------------------------------------------------------- data specs

def parse_datum(text: str, nl=None) -> tuple[Callable[[float], float], bool]:
    """Radial datum from a ``name[:value]`` string; returns (profile, singular).

    ``power:a``       ``|x|^{-a}``
    ``witness:alpha`` ``F^{-1}(min(|x|^alpha, F(0)))`` for the chosen f
    ``logsing:alpha`` ``max(-alpha log|x|, 0)``
    ``bump:h``        ``h exp(1 - 1/(1 - |x|^2))`` on the unit ball
    ``gauss:h``       ``h exp(-|x|^2)``
    ``const:c``       constant ``c``
    """
    name, _, val = text.partition(":")
    try:
        v = float(val) if val else None
    except ValueError as exc:
        raise UsageError(f"bad datum value in {text!r}") from exc
    if name == "power" and v is not None and v > 0:
        return (lambda r: r ** -v if r > 0 else math.inf), True
    if name == "witness" and v is not None and v > 0:
        if nl is None:
            raise UsageError("witness data need --f")
        return witness_radial(nl, SingularDataSpec(v)), True
    if name == "logsing" and v is not None and v > 0:
        return (lambda r: max(-v * math.log(r), 0.0) if r > 0 else math.inf), True
    if name == "bump":
        h = 1.0 if v is None else v
        return (lambda r: h * math.exp(1.0 - 1.0 / (1.0 - r * r)) if r < 1 else 0.0), False
    if name == "gauss":
        h = 1.0 if v is None else v
        return (lambda r: h * math.exp(-r * r)), False
    if name == "const" and v is not None and v >= 0:
        return (lambda r: v), False
    raise UsageError(f"unknown datum {text!r}; use power:a, witness:alpha, logsing:alpha, "
                     "bump:h, gauss:h or const:c")


def _nl(text: Optional[str]):
    if text is None:
        raise UsageError("--f is required")
    try:
        return make_nonlinearity(text)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from exc


def _grid(a) -> GridSpec:
    try:
        return GridSpec(a.dim, a.box, a.resolution, a.theta)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _datum_field(a, nl):
    radial, singular = parse_datum(a.datum, nl)
    grid = _grid(a)
    field_ = sample_radial(grid, radial, mollify=True, singular=singular, metadata=a.datum)
    return grid, radial, field_


# -------------------------------------------------------------- commands

def cmd_kernel(a) -> tuple[dict, bool]:
    prof = kernel_profile(a.theta, a.dim, r_max=a.rmax, n_points=a.points)
    mass = prof.mass()
    _say(f"mass={mass:.6f}")
    out = {"mass": mass, "mass_error": mass - 1.0, "max_quad_error": prof.max_quad_error,
           "tail_constant": prof.tail_constant}
    ok = abs(mass - 1.0) <= 1e-6
    if a.theta in (1.0, 2.0):
        # the closed form against the contour quadrature, an independent route
        radii = np.concatenate([np.linspace(0.0, 5.0, 26), [7.5, 10.0, 20.0]])
        exact = poisson_profile(radii, a.dim) if a.theta == 1 else gaussian_profile(radii, a.dim)
        quad = np.array([kernel_radial_quadrature(float(r), a.theta, a.dim)[0] for r in radii])
        err = float(np.max(np.abs(quad - exact)))
        label = "Cauchy" if a.theta == 1 else "Gaussian"
        _say(f"{label}-oracle max error={err:.3e}")
        out["oracle"] = label
        out["oracle_max_error"] = err
        ok = ok and err <= 1e-8
    if a.out:
        Path(a.out).mkdir(parents=True, exist_ok=True)
        path = Path(a.out) / "kernel_profile.csv"
        prof.to_csv(path)
        out["outputs"] = [str(path)]
    return out, (ok or not a.check)


def cmd_verify_jensen(a) -> tuple[dict, bool]:
    grid = _grid(a)
    rng = np.random.default_rng(a.seed)
    psis = {"u^2": np.square, "e^u": np.exp}
    worst = {}
    for name, Psi in psis.items():
        m = math.inf
        for _ in range(a.fields):
            vals = rng.random(grid.shape) * a.scale
            m = min(m, check_jensen(Field(grid, vals), Psi, a.t))
        worst[name] = m
        _say(f"Jensen slack {name}: min={m:.3e}")
    ok = all(v >= -1e-8 for v in worst.values())
    return {"min_slack": worst, "fields": a.fields, "seed": a.seed}, ok


def cmd_verify_smoothing(a) -> tuple[dict, bool]:
    grid = _grid(a)
    phi = sample_radial(grid, lambda r: r ** -a.a if r > 0 else math.inf, mollify=True)
    t_min = (8.0 * grid.h) ** grid.theta if a.t_min is None else a.t_min
    if not 0 < t_min < a.t_max:
        raise UsageError(f"need 0 < t-min < t-max (t-min = {t_min:.3g})")
    t = np.logspace(math.log10(a.t_max), math.log10(t_min), 7)
    fit = fit_smoothing_slope(phi, grid.dim / a.a, t)
    ok = abs(fit.slope - fit.predicted) <= 0.05
    _say(f"slope={fit.slope:.4f} predicted={fit.predicted:.4f}")
    return {"slope": fit.slope, "predicted": fit.predicted, "resolved": fit.resolved,
            "t_grid": t.tolist(), "sup_norms": fit.sup_norms.tolist()}, ok


def _kv(pairs) -> dict:
    out = {}
    for p in pairs or []:
        k, _, v = p.partition("=")
        try:
            out[k] = float(v)
        except ValueError as exc:
            raise UsageError(f"bad --param {p!r}") from exc
    return out


def cmd_verify_lemmas(a) -> tuple[dict, bool]:
    nl = _nl(a.f)
    try:
        scan = check_inequality_lemmas(nl, a.lemma, **_kv(a.param))
    except HypothesisViolation as exc:
        raise UsageError(str(exc)) from exc
    _say(f"{a.lemma}: threshold={scan.threshold} min_slack={scan.min_slack:.3e}")
    return {"lemma": a.lemma, "params": scan.params, "threshold": scan.threshold,
            "min_slack": scan.min_slack, "holds": scan.holds}, scan.holds


def cmd_verify_supersolution(a) -> tuple[dict, bool]:
    nl = _nl(a.f)
    grid, _, phi = _datum_field(a, nl)
    try:
        params = make_params(nl, a.variant, a.sigma, N=a.dim, theta=a.theta, r=a.r,
                             epsilon=a.epsilon)
    except (RegimeViolation, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    check = not a.no_regime_check
    if check:
        try:
            check_regime(nl, params, a.dim, a.theta)
        except RegimeViolation as exc:
            raise UsageError(str(exc)) from exc
    if a.T is not None:
        try:
            cert = verify_supersolution(phi, nl, params, a.T, nt=a.nt, ns=a.ns, check=check)
            trail = [{"T": a.T, "outcome": cert.verdict}]
        except (OverflowError, QuadratureNotConverged) as exc:
            cert, trail = None, [{"T": a.T, "outcome": type(exc).__name__, "detail": str(exc)}]
    else:
        search = find_certificate(phi, nl, params, nt=a.nt, ns=a.ns, check=check)
        cert, trail = search.certificate, search.trail
    out = {"search": trail}
    if cert is None:
        _say("verdict=INVALID (no horizon produced a finite residual)")
        out["verdict"] = "INVALID"
        return out, False
    _say(f"verdict={cert.verdict} T={cert.T:.4g} min_residual={cert.min_residual:.4g}")
    out.update(cert.to_dict())
    if a.out:
        Path(a.out).mkdir(parents=True, exist_ok=True)
        cert.to_json(Path(a.out) / "certificate.json")
        out["outputs"] = [str(Path(a.out) / "certificate.json")]
    return out, cert.valid


def cmd_evolve(a) -> tuple[dict, bool]:
    nl = _nl(a.f)
    grid, radial, phi = _datum_field(a, nl)
    try:
        cfg = EvolutionConfig(grid, a.T, a.nt, a.ns, a.max_iters, a.umax, a.conv_tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _, singular = parse_datum(a.datum, nl)
    res = iterate_monotone(phi, nl, cfg,
                           resample=lambda g: sample_radial(g, radial, singular=singular))
    out = {"config": cfg.to_dict(), **res.summary(), "timings": res.timings}
    if res.status == CONVERGED:
        out["residual"] = residual(res, phi, nl)
    _say(f"status={res.status} iterations={res.iterations} sup={res.sup_history[-1]:.4g}")
    if a.out:
        d = Path(a.out)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for k in sorted({a.nt // 4, a.nt // 2, a.nt}):
            p = d / f"u_t{k:04d}.bin"
            res.snapshot(k).to_binary(p)
            paths.append(str(p))
        p = d / "sup_history.csv"
        np.savetxt(p, np.column_stack([res.t_grid, res.sup_history]), delimiter=",",
                   header="t,sup_norm", comments="", fmt="%.17g")
        out["outputs"] = paths + [str(p)]
    return out, True


def cmd_classify(a) -> tuple[dict, bool]:
    nl = _nl(a.f)
    try:
        rep = classify_regime(ProblemSpec(nl, a.dim, a.theta, a.r, a.rho))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _say(f"regime={rep.regime} tag={rep.theorem_tag}")
    return rep.to_dict(), True


def cmd_scan(a) -> tuple[dict, bool]:
    nl = _nl(a.f)
    radial = witness_radial(nl, SingularDataSpec(a.alpha))
    t = np.logspace(math.log10(a.t_max), math.log10(a.t_min), a.points)
    scan = necessary_condition_scan(nl, radial, a.theta, a.dim, t,
                                    singular_exponent=power_witness_exponent(nl, a.alpha))
    _say(f"slope={scan.slope:.4f} ratio[t_min]={scan.ratio[-1]:.4g}")
    out = {"slope": scan.slope, "violates": scan.violates,
           "exceeds_bound": scan.exceeds_bound, "t": scan.t.tolist(),
           "ratio": scan.ratio.tolist()}
    if a.r is not None:
        probe = witness_integrability(nl, SingularDataSpec(a.alpha), a.r, a.dim, a.rho)
        out["integrability"] = {"finite": probe.finite, "limit": probe.limit}
    if a.out:
        Path(a.out).mkdir(parents=True, exist_ok=True)
        p = Path(a.out) / "scan.csv"
        scan.to_csv(p)
        out["outputs"] = [str(p)]
    return out, True


def cmd_sweep(a) -> tuple[dict, bool]:
    try:
        plan = SweepPlan.from_json(a.plan)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"bad plan: {exc}") from exc
    if a.workers is not None:
        plan.workers = a.workers
    plan.out_dir = a.out
    res = run_sweep(plan)
    _say(f"cells={len(res.verdicts)} agreement={res.agreement}")
    for v in res.verdicts:
        _say(f"  {v.cell} predicted={v.predicted} empirical={v.empirical}")
    return res.summary(), True


# ---------------------------------------------------------------- parser

def _grid_flags(p, theta_default=2.0, resolution_default=1024):
    p.add_argument("--dim", type=int, default=1, help="space dimension N (1 or 2)")
    p.add_argument("--theta", type=float, default=theta_default, help="order theta in (0, 2]")
    p.add_argument("--box", type=float, default=40.0, help="periodic box side L")
    p.add_argument("--resolution", type=int, default=resolution_default,
                   help="grid points per axis M")
    p.add_argument("--rho", type=float, default=1.0, help="UL window radius")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fracheat", description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="output directory (manifest and artifacts)")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("kernel", help="tabulate K and check its oracles")
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--rmax", type=float)
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--check", action="store_true", help="fail unless mass and oracle pass")
    p.set_defaults(run=cmd_kernel)

    pv = sub.add_parser("verify", help="property checks")
    vs = pv.add_subparsers(dest="what", parser_class=_Parser)
    p = vs.add_parser("jensen")
    _grid_flags(p)
    p.add_argument("--fields", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=3.0)
    p.add_argument("--t", type=float, default=0.1)
    p.set_defaults(run=cmd_verify_jensen)
    p = vs.add_parser("smoothing")
    _grid_flags(p, resolution_default=1 << 15)
    p.add_argument("--a", type=float, default=0.5, help="singularity |x|^-a")
    p.add_argument("--t-max", type=float, default=1e-1)
    p.add_argument("--t-min", type=float, help="default (8h)^theta, the smallest resolved time")
    p.set_defaults(run=cmd_verify_smoothing)
    p = vs.add_parser("lemmas")
    p.add_argument("--f")
    p.add_argument("--lemma", choices=LEMMAS, required=True)
    p.add_argument("--param", action="append", help="key=value, repeatable")
    p.set_defaults(run=cmd_verify_lemmas)
    p = vs.add_parser("supersolution")
    _grid_flags(p)
    p.add_argument("--f")
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--datum", default="bump:1")
    p.add_argument("--T", type=float, help="fixed horizon; searched by halving if absent")
    p.add_argument("--nt", type=int, default=16)
    p.add_argument("--ns", type=int, default=64)
    p.add_argument("--no-regime-check", action="store_true",
                   help="try the formula outside its hypotheses")
    p.set_defaults(run=cmd_verify_supersolution)

    p = sub.add_parser("evolve", help="monotone iteration")
    _grid_flags(p)
    p.add_argument("--f")
    p.add_argument("--datum", default="bump:1")
    p.add_argument("--T", type=float, default=1e-2)
    p.add_argument("--nt", type=int, default=32)
    p.add_argument("--ns", type=int, default=128)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--umax", type=float, default=1e8)
    p.add_argument("--conv-tol", type=float, default=1e-8)
    p.set_defaults(run=cmd_evolve)

    p = sub.add_parser("classify", help="regime and applicable statement")
    p.add_argument("--f")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--rho", type=float, default=1.0)
    p.set_defaults(run=cmd_classify)

    p = sub.add_parser("scan", help="necessary-condition scan for the witness datum")
    p.add_argument("--f")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--r", type=float, help="also probe integrability of F(phi)^-r")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--t-max", type=float, default=1e-2)
    p.add_argument("--t-min", type=float, default=1e-6)
    p.add_argument("--points", type=int, default=9)
    p.set_defaults(run=cmd_scan)

    p = sub.add_parser("sweep", help="parallel phase-diagram sweep")
    p.add_argument("--plan", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(run=cmd_sweep)
    return ap


def _manifest(argv, a, result: dict, ok: bool, wall: float) -> dict:
    cfg = {k: v for k, v in vars(a).items() if k != "run"}
    return {
        "command_line": ["fracheat", *argv],
        "config": cfg,
        "versions": {"fracheat": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "wall_clock_s": wall,
        "outputs": result.pop("outputs", []),
        "verdict": "PASS" if ok else "FAIL",
        "result": result,
    }


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # allow --out after the subcommand as well as before it
    if "--out" in argv:
        i = argv.index("--out")
        if i + 1 < len(argv):
            argv = ["--out", argv[i + 1]] + argv[:i] + argv[i + 2:]
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:  # argparse has already printed the help or the error
        return int(exc.code or 0)
    if not hasattr(a, "run"):
        parser.print_help(sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        result, ok = a.run(a)
    except UsageError as exc:
        parser.print_help(sys.stderr)
        print(f"\nfracheat: error: {exc}", file=sys.stderr)
        return 2
    man = _manifest(argv, a, result, ok, time.perf_counter() - t0)
    text = json.dumps(man, indent=2, default=_jsonable)
    if a.out:
        Path(a.out).mkdir(parents=True, exist_ok=True)
        (Path(a.out) / "manifest.json").write_text(text)
        _say(f"manifest written to {Path(a.out) / 'manifest.json'}")
    else:
        print(text)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
