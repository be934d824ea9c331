"""Parameter sweeps: predicted regime against empirical runs, cell by cell.

Each cell instantiates the witness family ``phi = F^{-1}(|x|^alpha)``:
``alpha`` is the midpoint of ``(theta, N/r)`` (capped so ``phi`` stays
locally integrable) for supercritical cells and ``0.8 min(theta, N/r)``
otherwise.  A cell is labelled

* ``Exists``: the iteration converged and, where a supersolution family
  applies, a VALID certificate was found;
* ``NoExistEvidence``: refinement-confirmed blow-up and a violated
  necessary condition;
* ``Inconclusive``: anything else, including per-cell errors.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .classify import (CRITICAL, SUPERCRITICAL, UNCLASSIFIED, ProblemSpec, SingularDataSpec,
                       classify_regime, make_singular_datum, necessary_condition_scan,
                       power_witness_exponent)
from .field import GridSpec, sample_radial
from .nonlinearity import make_nonlinearity, q_value
from .solver import BLOWUP, CONVERGED, EvolutionConfig, iterate_monotone
from .supersolution import RegimeViolation, find_certificate, make_params

EXISTS, NO_EXIST, INCONCLUSIVE = "Exists", "NoExistEvidence", "Inconclusive"
AXES = ("f", "theta", "N", "r")
SLOPE_THRESHOLD = -0.01

DEFAULT_CONFIG = {
    "box": 40.0, "resolution": 1024, "T": 1e-3, "nt": 32, "ns": 128,
    "max_iters": 200, "blowup_threshold": 1e8, "conv_tol": 1e-8, "sigma": 0.5,
    "symbol": "lattice",
}


@dataclass
class SweepPlan:
    """Axes to cross, a per-cell configuration template and execution settings.

    Missing axes take the defaults ``f = upow:3``, ``theta = 2``, ``N = 1``.
    """

    axes: dict
    config: dict = field(default_factory=dict)
    workers: int = 1
    out_dir: Optional[str] = None
    budget: int = 256

    def __post_init__(self):
        unknown = set(self.axes) - set(AXES)
        if unknown:
            raise ValueError(f"unknown axes {sorted(unknown)}; allowed {AXES}")
        if "r" not in self.axes:
            raise ValueError("the r axis is required")
        unknown = set(self.config) - set(DEFAULT_CONFIG)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        if len(self.cells()) > self.budget:
            raise ValueError(f"{len(self.cells())} cells exceed the budget {self.budget}")
        for cell in self.cells():
            make_nonlinearity(cell["f"])
            ProblemSpec(make_nonlinearity(cell["f"]), cell["N"], cell["theta"], cell["r"])
            GridSpec(cell["N"], self.resolved_config()["box"],
                     self.resolved_config()["resolution"], cell["theta"])

    @classmethod
    def from_json(cls, path) -> "SweepPlan":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(raw["axes"], raw.get("config", {}), raw.get("workers", 1),
                   raw.get("out_dir"), raw.get("budget", 256))

    def resolved_config(self) -> dict:
        return {**DEFAULT_CONFIG, **self.config}

    def cells(self) -> list:
        ax = {"f": ["upow:3"], "theta": [2.0], "N": [1], **self.axes}
        names = list(AXES)
        return [dict(zip(names, combo)) for combo in
                itertools.product(*(ax[n] for n in names))]


@dataclass
class CellVerdict:
    cell: dict
    regime: dict
    predicted: Optional[str]
    empirical: str
    alpha: float
    scan_slope: Optional[float] = None
    scan_exceeds_bound: Optional[bool] = None
    certificate: Optional[dict] = None
    status: Optional[str] = None
    blowup_time: Optional[float] = None
    refined_blowup_time: Optional[float] = None
    blowup_confirmed: Optional[bool] = None
    T_run: Optional[float] = None
    config_hash: str = ""
    error: Optional[str] = None
    timings: dict = field(default_factory=dict)

    @property
    def agrees(self) -> Optional[bool]:
        if self.predicted is None or self.empirical == INCONCLUSIVE:
            return None
        return self.predicted == self.empirical


def predicted_label(tag: str, regime: str) -> Optional[str]:
    if tag == UNCLASSIFIED:
        return None
    return NO_EXIST if regime == SUPERCRITICAL else EXISTS


def cell_alpha(nl, N: int, theta: float, r: float, regime: str) -> float:
    q = q_value(nl)
    if regime == SUPERCRITICAL:
        hi = N / r
        if q > 1 + 1e-9:
            hi = min(hi, N / (q - 1.0))  # keeps F^{-1}(|x|^alpha) locally integrable
        return 0.5 * (theta + hi)
    return 0.8 * min(theta, N / r)


def _family(nl, regime: str, tag: str) -> Optional[str]:
    if regime == SUPERCRITICAL or tag == UNCLASSIFIED:
        return None
    if regime == CRITICAL:
        if tag == "Thm5.2(ii)":
            return "critical-exp"
        return "critical-power-low"
    return "exp" if abs(q_value(nl) - 1.0) < 1e-6 else "power"


def config_hash(cell: dict, config: dict) -> str:
    blob = json.dumps({"cell": cell, "config": config}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def run_cell(cell: dict, config: dict) -> CellVerdict:
    """Classify, scan, certify and iterate one cell; never raises."""
    cfg = {**DEFAULT_CONFIG, **config}
    t0 = time.perf_counter()
    nl = make_nonlinearity(cell["f"])
    N, th, r = int(cell["N"]), float(cell["theta"]), float(cell["r"])
    rep = classify_regime(ProblemSpec(nl, N, th, r))
    alpha = cell_alpha(nl, N, th, r, rep.regime)
    v = CellVerdict(cell, rep.to_dict(), predicted_label(rep.theorem_tag, rep.regime),
                    INCONCLUSIVE, alpha, config_hash=config_hash(cell, cfg))
    try:
        dspec = SingularDataSpec(alpha)
        grid = GridSpec(N, cfg["box"], cfg["resolution"], th)
        phi, radial = make_singular_datum(nl, dspec, grid)

        ts = time.perf_counter()
        scan = necessary_condition_scan(nl, radial, th, N,
                                        singular_exponent=power_witness_exponent(nl, alpha))
        v.scan_slope, v.scan_exceeds_bound = scan.slope, scan.exceeds_bound
        v.timings["scan_s"] = time.perf_counter() - ts

        T_run = float(cfg["T"])
        family = _family(nl, rep.regime, rep.theorem_tag)
        cert_ok = None
        if family is not None:
            ts = time.perf_counter()
            try:
                params = make_params(nl, family, cfg["sigma"], N=N, theta=th, r=r)
                search = find_certificate(phi, nl, params, symbol=cfg["symbol"])
                cert_ok = search.valid
                if search.certificate is not None:
                    v.certificate = search.certificate.to_dict()
                if cert_ok:
                    T_run = min(T_run, search.certificate.T)
            except RegimeViolation as exc:
                v.certificate = {"verdict": "NOT_APPLICABLE", "reason": str(exc)}
            v.timings["certificate_s"] = time.perf_counter() - ts

        ts = time.perf_counter()
        ecfg = EvolutionConfig(grid, T_run, cfg["nt"], cfg["ns"], cfg["max_iters"],
                               cfg["blowup_threshold"], cfg["conv_tol"], cfg["symbol"])
        res = iterate_monotone(phi, nl, ecfg, resample=lambda g: sample_radial(g, radial))
        v.timings["solver_s"] = time.perf_counter() - ts
        v.status, v.T_run = res.status, T_run
        v.blowup_time, v.refined_blowup_time = res.blowup_time, res.refined_blowup_time
        v.blowup_confirmed = res.blowup_confirmed

        violated = scan.slope <= SLOPE_THRESHOLD or scan.exceeds_bound
        if res.status == CONVERGED and cert_ok is not False:
            v.empirical = EXISTS
        elif res.status == BLOWUP and res.blowup_confirmed and violated:
            v.empirical = NO_EXIST
    except Exception as exc:  # recorded per cell; the sweep carries on
        v.error = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"
    v.timings["total_s"] = time.perf_counter() - t0
    return v


def _run_cell_args(args):
    return run_cell(*args)


def resolve_workers(requested: int) -> int:
    env = os.environ.get("FRACHEAT_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, int(requested))


@dataclass
class SweepResult:
    verdicts: list
    agreement: Optional[float]
    wall_s: float

    def summary(self) -> dict:
        counts = {}
        for v in self.verdicts:
            counts[v.empirical] = counts.get(v.empirical, 0) + 1
        return {"cells": len(self.verdicts), "agreement": self.agreement,
                "labels": counts, "wall_s": self.wall_s}


def agreement_rate(verdicts) -> Optional[float]:
    judged = [v.agrees for v in verdicts if v.agrees is not None]
    return sum(judged) / len(judged) if judged else None


def run_sweep(plan: SweepPlan) -> SweepResult:
    """Run every cell, concurrently up to ``plan.workers`` processes.

    ``FRACHEAT_WORKERS`` overrides the worker count.  Results are ordered as
    ``plan.cells()`` regardless of completion order.
    """
    t0 = time.perf_counter()
    cells = plan.cells()
    cfg = plan.resolved_config()
    workers = resolve_workers(plan.workers)
    jobs = [(c, cfg) for c in cells]
    if workers == 1:
        verdicts = [run_cell(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            verdicts = list(pool.map(_run_cell_args, jobs))
    result = SweepResult(verdicts, agreement_rate(verdicts), time.perf_counter() - t0)
    if plan.out_dir:
        write_outputs(plan, result)
    return result


VERDICT_COLUMNS = ["f", "theta", "N", "r", "alpha", "regime", "theorem_tag", "predicted",
                   "empirical", "agrees", "scan_slope", "scan_exceeds_bound",
                   "certificate_verdict", "certificate_T", "status", "T_run", "blowup_time",
                   "refined_blowup_time", "blowup_confirmed", "config_hash", "total_s", "error"]


def _fmt(x):
    if isinstance(x, float):
        return "%.17g" % x
    return "" if x is None else x


def write_outputs(plan: SweepPlan, result: SweepResult) -> None:
    """verdicts.csv, phase.csv, cells/*.json and sweep_manifest.json under ``out_dir``."""
    out = Path(plan.out_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    with open(out / "verdicts.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(VERDICT_COLUMNS)
        for v in result.verdicts:
            cert = v.certificate or {}
            row = [v.cell["f"], v.cell["theta"], v.cell["N"], v.cell["r"], v.alpha,
                   v.regime["regime"], v.regime["theorem_tag"], v.predicted, v.empirical,
                   v.agrees, v.scan_slope, v.scan_exceeds_bound, cert.get("verdict"),
                   cert.get("T"), v.status, v.T_run, v.blowup_time, v.refined_blowup_time,
                   v.blowup_confirmed, v.config_hash, v.timings.get("total_s"),
                   (v.error or "").splitlines()[0] if v.error else None]
            w.writerow([_fmt(x) for x in row])
    with open(out / "phase.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f", "theta", "N", "r", "predicted", "empirical"])
        for v in result.verdicts:
            w.writerow([_fmt(x) for x in (v.cell["f"], v.cell["theta"], v.cell["N"],
                                         v.cell["r"], v.predicted or "Unclassified",
                                         v.empirical)])
    for i, v in enumerate(result.verdicts):
        with open(out / "cells" / f"cell_{i:03d}.json", "w") as fh:
            json.dump({**asdict(v), "agrees": v.agrees}, fh, indent=2, default=_json_default)
    with open(out / "sweep_manifest.json", "w") as fh:
        json.dump({"axes": plan.axes, "config": plan.resolved_config(),
                   "workers": resolve_workers(plan.workers), **result.summary()},
                  fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")
