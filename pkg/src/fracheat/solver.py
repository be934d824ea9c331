"""Monotone (Picard) construction of the integral solution.

``u_1(t) = S(t) phi`` and ``u_{n+1}(t) = S(t) phi + int_0^t S(t-s) f(u_n(s)) ds``
on uniform time slices.  Between slices ``u_n`` is interpolated linearly;
``f(u_n)`` is sampled at the midpoints of ``ns`` sub-intervals and the
semigroup factor is integrated exactly on each, so with a positive symbol
every weight is positive and the iteration is monotone in exact arithmetic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .field import Field, GridSpec, duhamel_integrals
from .nonlinearity import Nonlinearity

CONVERGED, BLOWUP, MAX_ITERATIONS = "Converged", "BlowUp", "MaxIterations"


class MonotonicityViolation(ArithmeticError):
    """An iterate fell below its predecessor: the discretisation is not order preserving."""


@dataclass(frozen=True)
class EvolutionConfig:
    """Discretisation and stopping rules for one run.

    ``ns`` counts the Duhamel sub-intervals on ``[0, T]`` and must be a
    multiple of ``nt``.  ``symbol`` overrides the grid's semigroup symbol;
    the default ``"lattice"`` keeps the discrete kernel positive.
    """

    grid: GridSpec
    T: float
    nt: int = 32
    ns: int = 128
    max_iters: int = 200
    blowup_threshold: float = 1e8
    conv_tol: float = 1e-8
    symbol: Optional[str] = "lattice"
    confirm_blowup: bool = True

    def __post_init__(self):
        if self.nt < 4:
            raise ValueError("nt must be at least 4")
        if self.ns % self.nt:
            raise ValueError("ns must be a multiple of nt")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.conv_tol > 0 or self.max_iters < 1:
            raise ValueError("need conv_tol > 0 and max_iters >= 1")

    @property
    def spec(self) -> GridSpec:
        return self.grid if self.symbol is None else self.grid.with_symbol(self.symbol)

    def refined(self) -> "EvolutionConfig":
        """Half the mesh width and half the time steps."""
        return EvolutionConfig(self.grid.refined(), self.T, 2 * self.nt, 2 * self.ns,
                               self.max_iters, self.blowup_threshold, self.conv_tol,
                               self.symbol, confirm_blowup=False)

    def to_dict(self) -> dict:
        return {"dim": self.grid.dim, "box": self.grid.box, "resolution": self.grid.resolution,
                "theta": self.grid.theta, "symbol": self.spec.symbol, "T": self.T,
                "nt": self.nt, "ns": self.ns, "max_iters": self.max_iters,
                "blowup_threshold": self.blowup_threshold, "conv_tol": self.conv_tol}


@dataclass
class EvolutionResult:
    """Outcome of ``iterate_monotone``.

    ``slices`` holds the last iterate at ``t_k = kT/nt`` (k = 0 is the datum).
    ``blowup_time`` is the first slice where ``U_max`` was exceeded and
    ``blowup_confirmed`` records the refinement check (``None`` if not run).
    """

    status: str
    config: EvolutionConfig
    iterates_supnorm: list
    sup_history: np.ndarray
    iterations: int
    slices: np.ndarray = field(repr=False)
    blowup_time: Optional[float] = None
    blowup_confirmed: Optional[bool] = None
    refined_blowup_time: Optional[float] = None
    bound_certificate: Optional[object] = field(default=None, repr=False)
    timings: dict = field(default_factory=dict)

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.config.T, self.config.nt + 1)

    def snapshot(self, k: int) -> Field:
        return Field(self.config.spec, self.slices[k], f"u at t={self.t_grid[k]!r}")

    @property
    def snapshots(self) -> list:
        idx = sorted({self.config.nt // 4, self.config.nt // 2, self.config.nt})
        return [self.snapshot(k) for k in idx]

    def summary(self) -> dict:
        return {"status": self.status, "iterations": self.iterations,
                "final_sup": float(self.sup_history[-1]),
                "blowup_time": self.blowup_time, "blowup_confirmed": self.blowup_confirmed,
                "refined_blowup_time": self.refined_blowup_time,
                "iterates_supnorm": [float(v) for v in self.iterates_supnorm]}


def _free_evolution(phi: np.ndarray, spec: GridSpec, T: float, nt: int) -> np.ndarray:
    rate = spec.rate()
    ph = np.fft.rfftn(phi)
    out = np.empty((nt + 1,) + spec.shape)
    out[0] = phi
    for k in range(1, nt + 1):
        out[k] = np.fft.irfftn(ph * np.exp(-(k * T / nt) * rate), s=spec.shape,
                               axes=tuple(range(spec.dim)))
    return out


def picard_map(slices: np.ndarray, free: np.ndarray, nl: Nonlinearity, spec: GridSpec,
               T: float, ns: int, cap: float = math.inf) -> np.ndarray:
    """One application of the integral operator to stored slices.

    ``f`` is evaluated at ``min(u, cap)`` so arithmetic stays finite after a
    threshold crossing; see ``clamp_level``.
    """
    nt = slices.shape[0] - 1
    m = ns // nt

    def source(i, s):
        k, j = divmod(i, m)
        w = (j + 0.5) / m
        u = (1.0 - w) * slices[k] + w * slices[k + 1]
        return nl.f(np.minimum(u, cap))

    with np.errstate(over="ignore"):
        duh = duhamel_integrals(spec, source, T, nt, ns)
    out = free.copy()
    out[1:] += np.asarray(duh)
    return out


LOG_F_CAP = 460.0


def clamp_level(nl: Nonlinearity, U: float) -> float:
    """Largest ``u <= U`` with ``log f(u) <= LOG_F_CAP`` (f stays far from overflow)."""
    if float(nl.log_f(U)) <= LOG_F_CAP:
        return U
    lo, hi = 0.0, U
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(nl.log_f(mid)) <= LOG_F_CAP:
            lo = mid
        else:
            hi = mid
    return lo


def _first_crossing(slices: np.ndarray, U: float) -> Optional[int]:
    over = np.nonzero(np.max(slices.reshape(slices.shape[0], -1), axis=1) > U)[0]
    return int(over[0]) if over.size else None


def iterate_monotone(phi: Field, nl: Nonlinearity, cfg: EvolutionConfig,
                     resample: Optional[Callable[[GridSpec], Field]] = None) -> EvolutionResult:
    """Monotone iteration of the integral equation on ``[0, T]``.

    Parameters
    ----------
    phi
        Nonnegative datum on ``cfg.grid``.
    resample
        ``GridSpec -> Field`` producing the same datum on a refined grid.
        When given, a threshold crossing is re-run at half the mesh width and
        time step and is confirmed only if the refined crossing is no later
        than the coarse one plus one coarse step.

    Raises
    ------
    MonotonicityViolation
        ``u_{n+1} < u_n - 1e-10 max(1, ||u_n||_inf, ||u_{n+1}||_inf)`` somewhere.
    """
    if np.any(phi.values < 0):
        raise ValueError("the datum must be nonnegative")
    if not cfg.blowup_threshold > phi.sup():
        raise ValueError("U_max must exceed the sup of the datum")
    if float(np.min(nl.f(np.array([0.0, 1.0])))) < 0:
        raise ValueError("f must be nonnegative")
    spec = cfg.spec
    if phi.spec.shape != spec.shape:
        raise ValueError("datum and configuration grids differ")
    t0 = time.perf_counter()
    U = cfg.blowup_threshold
    cap = clamp_level(nl, U)
    free = _free_evolution(phi.values, spec, cfg.T, cfg.nt)
    u = free
    sups = [float(np.max(u))]
    status, crossing, n = MAX_ITERATIONS, _first_crossing(u, U), 1
    while n < cfg.max_iters + 1:
        new = picard_map(u, free, nl, spec, cfg.T, cfg.ns, cap=cap)
        # FFT round-off is absolute, of order eps times the largest value
        scale = max(1.0, float(np.max(np.abs(u))), float(np.max(np.abs(new))))
        drop = float(np.min(new - u)) + 1e-10 * scale
        if drop < 0:
            raise MonotonicityViolation(f"iterate {n + 1} decreased by {-drop:.3e}")
        change = float(np.max(np.abs(new - u)))
        size = float(np.max(np.abs(new)))
        u, n = new, n + 1
        sups.append(size)
        cross = _first_crossing(u, U)
        if cross is not None:
            # crossing times can only move earlier; stop once they settle
            if crossing is not None and cross == crossing:
                status = BLOWUP
                break
            crossing = cross
            continue
        if change <= cfg.conv_tol * size:
            status = CONVERGED
            break
    else:
        if crossing is not None:
            status = BLOWUP
    n_done = n - 1 if status != MAX_ITERATIONS else n
    sup_hist = np.max(u.reshape(u.shape[0], -1), axis=1)
    res = EvolutionResult(status, cfg, sups, sup_hist, max(n_done, 1), u,
                          timings={"iterate_s": time.perf_counter() - t0})
    if status == BLOWUP:
        res.blowup_time = crossing * cfg.T / cfg.nt
        if cfg.confirm_blowup and resample is not None:
            fine_cfg = cfg.refined()
            fine = iterate_monotone(resample(fine_cfg.grid), nl, fine_cfg)
            res.timings["confirm_s"] = fine.timings["iterate_s"]
            if fine.status == BLOWUP:
                res.refined_blowup_time = fine.blowup_time
                res.blowup_confirmed = fine.blowup_time <= res.blowup_time + cfg.T / cfg.nt
            else:
                res.blowup_confirmed = False
    return res


def residual(result: EvolutionResult, phi: Field, nl: Nonlinearity) -> float:
    """``sup |u - F[u]|`` with ``F`` re-evaluated at twice the Duhamel nodes."""
    cfg = result.config
    spec = cfg.spec
    free = _free_evolution(phi.values, spec, cfg.T, cfg.nt)
    again = picard_map(result.slices, free, nl, spec, cfg.T, 2 * cfg.ns)
    return float(np.max(np.abs(again - result.slices)))
