"""Regime classification, the singular witness datum and its diagnostics.

The regime of ``F(phi)^{-r} in L^1_ul`` is decided by ``r`` against
``N/theta``.  Below it, ``phi = F^{-1}(|x|^alpha)`` with
``theta < alpha < N/r`` is the standard witness: ``||S(t) phi||_inf``
outgrows ``F^{-1}(t)`` as ``t -> 0``, which no solution can allow.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .field import Field, GridSpec, sample_radial
from .kernel import cached_profile, convolve_with_kernel
from .nonlinearity import (Nonlinearity, convexity_mask, estimate_q, eval_F, eval_F_inv,
                           log_F, q_value)

SUBCRITICAL, CRITICAL, SUPERCRITICAL = "Subcritical", "Critical", "Supercritical"
UNCLASSIFIED = "Unclassified"


def critical_exponent(N: int, theta: float, p: float) -> float:
    """``N (p - 1) / theta``."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    return N * (p - 1.0) / theta


@dataclass(frozen=True)
class ProblemSpec:
    nl: Nonlinearity
    N: int
    theta: float
    r: float
    rho: float = 1.0

    def __post_init__(self):
        if not 0 < self.theta <= 2:
            raise ValueError("theta must lie in (0, 2]")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.N < 1:
            raise ValueError("N must be a positive integer")


@dataclass
class RegimeReport:
    """Regime, the applicable statement and the hypotheses that were checked.

    ``also_applies`` lists statements for the pure power or exponential
    families that coincide with ``theorem_tag`` here.
    """

    regime: str
    theorem_tag: str
    side_conditions: list
    q: float
    critical_r: float
    also_applies: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _convex_on_half_line(nl: Nonlinearity) -> bool:
    top = min(200.0, math.log2(nl.u_cap) - 1.0)
    u = np.power(2.0, np.arange(-20.0, top, 0.5))
    return bool(np.all(convexity_mask(nl, u)))


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def classify_regime(spec: ProblemSpec) -> RegimeReport:
    """Place ``(f, N, theta, r)`` against the existence and nonexistence statements.

    Tags: ``A(i-1)``, ``A(i-2)``, ``A(ii)`` for q > 1; ``B(i)``, ``B(ii)`` for
    q = 1; ``Thm5.1(ii)`` and ``Thm5.2(ii)`` for the critical pure power and
    exponential cases; ``Unclassified`` when no hypothesis set is met.
    """
    nl, N, th, r = spec.nl, spec.N, spec.theta, spec.r
    q = q_value(nl)
    rc = N / th
    is_one = abs(q - 1.0) < 1e-6
    conds = []

    def cond(name, ok):
        conds.append({"name": name, "holds": bool(ok)})
        return bool(ok)

    if _same(r, rc):
        regime = CRITICAL
    else:
        regime = SUBCRITICAL if r > rc else SUPERCRITICAL
    cond("r > N/theta", regime == SUBCRITICAL)
    tag, also = UNCLASSIFIED, []

    if regime == SUPERCRITICAL:
        convex = cond("f convex on [0, inf)", _convex_on_half_line(nl))
        if convex:
            tag = "B(ii)" if is_one else "A(ii)"
            if nl.name == "upow":
                also.append("Thm5.1(iii)")
            if nl.name == "exp":
                also.append("Thm5.2(iii)")
    elif regime == SUBCRITICAL:
        if is_one:
            if cond("(F2)", estimate_q(nl).satisfies_F2):
                tag = "B(i)"
                if nl.name == "exp":
                    also.append("Thm5.2(i)")
        else:
            gt = cond("r > q-1", r > q - 1.0 and not _same(r, q - 1.0))
            ge = cond("r >= q-1", r > q - 1.0 or _same(r, q - 1.0))
            bounded = cond("f'F <= q for large u", estimate_q(nl, q0=q).q_upper_holds)
            if ge and bounded:
                tag = "A(i-2)"
                if nl.name == "upow":
                    also.append("Thm5.1(i)")
            elif gt:
                tag = "A(i-1)"
    else:
        if nl.name == "upow":
            p = float(nl.params["p"])
            above = cond("p > 1 + theta/N", p > 1.0 + th / N and not _same(p, 1.0 + th / N))
            if th < N:
                cond("p < N/(N-theta)", p < N / (N - th))
            if above:
                tag = "Thm5.1(ii)"
        elif nl.name == "exp":
            tag = "Thm5.2(ii)"
    return RegimeReport(regime, tag, conds, q, rc, also)


# ------------------------------------------------------- witness datum

@dataclass(frozen=True)
class SingularDataSpec:
    """``phi = F^{-1}(min(|x - c|^alpha, F(0)))``.

    Beyond ``cutoff_radius`` (if given) the datum is held at its value
    there, which keeps it bounded below on a large periodic box.
    """

    alpha: float
    cutoff_radius: Optional[float] = None
    centered_at: tuple = ()

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.cutoff_radius is not None and not self.cutoff_radius > 0:
            raise ValueError("cutoff_radius must be positive")

    def is_witness(self, N: int, theta: float, r: float) -> bool:
        return theta < self.alpha < N / r


def witness_radial(nl: Nonlinearity, spec: SingularDataSpec) -> Callable[[float], float]:
    """Exact radial profile ``rho -> F^{-1}(min(rho^alpha, F(0)))``."""
    a, F0 = spec.alpha, nl.F0
    R = spec.cutoff_radius

    def phi(rho: float) -> float:
        rho = float(rho)
        if R is not None and rho > R:
            rho = R
        if rho == 0.0:
            return math.inf
        la = a * math.log(rho)
        if la >= math.log(F0):
            return 0.0
        return float(eval_F_inv(nl, math.exp(la)))
    return phi


def make_singular_datum(nl: Nonlinearity, spec: SingularDataSpec,
                        grid: GridSpec) -> tuple[Field, Callable[[float], float]]:
    """Box-averaged grid sample of the witness and its exact radial evaluator."""
    phi = witness_radial(nl, spec)
    center = spec.centered_at or None
    field_ = sample_radial(grid, phi, mollify=True, center=center,
                           metadata=f"witness F^-1(|x|^{spec.alpha:g}) for {nl.spec}")
    return field_, phi


@dataclass
class IntegrabilityProbe:
    """Ball integrals of ``F(phi)^{-r}`` truncated at ``|x| >= eps``."""

    eps: np.ndarray
    values: np.ndarray
    finite: bool
    limit: Optional[float]


def witness_integrability(nl: Nonlinearity, spec: SingularDataSpec, r: float, N: int,
                          rho: float = 1.0,
                          eps: Sequence[float] = tuple(10.0 ** -k for k in range(2, 13))
                          ) -> IntegrabilityProbe:
    """Is ``F(phi)^{-r}`` locally integrable near the singular point?

    For a radially nonincreasing integrand the ball centred at the
    singularity carries the largest window integral, so the UL norm is
    finite iff the truncated integrals converge as ``eps -> 0``.  Successive
    increments over decades must shrink geometrically; the limit is then
    estimated by summing the geometric tail.
    """
    phi = witness_radial(nl, spec)
    area = {1: 2.0, 2: 2.0 * math.pi}.get(N)  # surface of the unit sphere
    if area is None:
        raise ValueError("N must be 1 or 2")

    def g(s):
        return math.exp(-r * float(log_F(nl, phi(s)))) * s ** (N - 1)

    vals = []
    for e in eps:
        # breakpoints at every decade keep quad honest near the singular end
        pts = [e]
        while pts[-1] * 10.0 < rho:
            pts.append(pts[-1] * 10.0)
        pts.append(rho)
        v = sum(integrate.quad(g, a, b, limit=200, epsrel=1e-12)[0]
                for a, b in zip(pts[:-1], pts[1:]))
        vals.append(area * v)
    vals = np.array(vals)
    inc = np.diff(vals)
    ratios = inc[1:] / inc[:-1]
    finite = bool(np.all(ratios < 1.0 - 1e-3))
    limit = None
    if finite:
        q = float(ratios[-1])
        limit = float(vals[-1] + inc[-1] * q / (1.0 - q))
    return IntegrabilityProbe(np.asarray(eps), vals, finite, limit)


# -------------------------------------------------- necessary condition

DEFAULT_T_GRID = tuple(np.logspace(-2, -6, 9))


@dataclass
class ScanResult:
    t: np.ndarray
    sup_norm: np.ndarray
    F_inv_t: np.ndarray
    ratio: np.ndarray
    slope: float

    @property
    def violates(self) -> bool:
        """Ratio grows as t -> 0 (negative log-log slope)."""
        return self.slope < 0

    @property
    def exceeds_bound(self) -> bool:
        """The inequality itself fails at the smallest scanned time."""
        return bool(self.ratio[-1] > 1.0)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.t, self.sup_norm, self.F_inv_t, self.ratio]),
                   delimiter=",", header="t,sup_norm,F_inv_t,ratio", comments="", fmt="%.17g")


def necessary_condition_scan(nl: Nonlinearity, datum: Callable[[float], float], theta: float,
                             N: int, t_grid: Sequence[float] = DEFAULT_T_GRID,
                             singular_exponent: Optional[float] = None) -> ScanResult:
    """``||S(t) phi||_inf / F^{-1}(t)`` along ``t_grid`` and its log-log slope.

    The datum must be radial and nonincreasing so the sup sits at the
    centre, where ``S(t) phi`` is computed by whole-space quadrature against
    the kernel profile (no grid, no periodisation).
    """
    profile = cached_profile(theta, N)
    t = np.asarray(sorted(t_grid, reverse=True), dtype=float)
    if np.any(t >= nl.F0) or np.any(t <= 0):
        raise ValueError("t must lie in (0, F(0))")
    sup = np.array([convolve_with_kernel(profile, datum, float(s), 0.0,
                                         singular_exponent=singular_exponent) for s in t])
    finv = np.asarray(eval_F_inv(nl, t), dtype=float)
    ratio = sup / finv
    slope = float(np.polyfit(np.log(t), np.log(ratio), 1)[0])
    return ScanResult(t, sup, finv, ratio, slope)


def power_witness_exponent(nl: Nonlinearity, alpha: float) -> Optional[float]:
    """``a`` with ``F^{-1}(|x|^alpha) ~ |x|^{-a}`` for power nonlinearities, else None."""
    if nl.name == "upow":
        return alpha / (nl.params["p"] - 1.0)
    return None


# ------------------------------------------------------- quasi-scaling

def _upsample_trig(values: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolation onto a grid ``factor`` times finer."""
    M = values.shape[0]
    shape = tuple(factor * M for _ in values.shape)
    spec = np.fft.fftn(values)
    big = np.zeros(shape, dtype=complex)
    half = M // 2
    idx = [np.r_[0:half, factor * M - half:factor * M] for _ in values.shape]
    src = [np.r_[0:half, M - half:M] for _ in values.shape]
    big[np.ix_(*idx)] = spec[np.ix_(*src)]
    return np.real(np.fft.ifftn(big)) * factor ** values.ndim


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[[0, -1]] = 0.5
    return w


@dataclass
class QuasiScalingCheck:
    lam: float
    scaled_integral: float
    original_integral: float

    @property
    def discrepancy(self) -> float:
        ref = abs(self.original_integral)
        return abs(self.scaled_integral - self.original_integral) / (ref if ref > 0 else 1.0)


def quasi_scaling_check(nl: Nonlinearity, u: Field, lam: float) -> QuasiScalingCheck:
    """Compare ``int_D F(u_lam)^{-N/2}`` with ``int_{lam D} F(u)^{-N/2}``.

    ``u_lam(x) = F^{-1}(lam^{-2} F(u(lam x)))`` and ``D`` is the part of the
    box mapped into the box by ``x -> lam x``.  The two integrals agree by
    change of variables, so the discrepancy measures quadrature and range
    errors only.  ``lam`` must be a power of two so that ``lam D`` is made
    of grid points; for ``lam < 1`` the datum is trigonometrically
    interpolated and must be constant near the edges of ``lam D``.

    Raises
    ------
    ValueError
        Unless the grid's theta is 2, or when ``F^{-1}`` is needed outside
        ``(0, F(0))``.
    """
    spec = u.spec
    if spec.theta != 2:
        raise ValueError("the quasi-scaling is stated for theta = 2")
    k = math.log2(lam)
    if abs(k - round(k)) > 1e-12:
        raise ValueError("lam must be a power of two")
    k = int(round(k))
    N, M, h = spec.dim, spec.resolution, spec.h
    expo = -N / 2.0

    def density(v):
        return np.exp(expo * np.asarray(log_F(nl, np.ravel(v)))).reshape(np.shape(v))

    if k == 0:
        val = float(np.sum(density(u.values)) * h ** N)
        return QuasiScalingCheck(lam, val, val)
    if k > 0:
        # D: the central 1/lam of the box; lam x_j lands on every lam-th node
        n = M // 2 ** k
        start = M // 2 - n // 2
        sel = (start + np.arange(n) - M // 2) * 2 ** k + M // 2
        sample = u.values[np.ix_(*([sel] * N))]
        orig_vals, orig_w = u.values, np.ones(u.values.shape)
        scaled_h = h
    else:
        factor = 2 ** (-k)
        fine = _upsample_trig(u.values, factor)
        # x_j / factor sits on the fine grid at index j + (factor - 1) M / 2
        sel = np.arange(M) + (factor - 1) * M // 2
        sample = fine[np.ix_(*([sel] * N))]
        n = M // factor
        start = M // 2 - n // 2
        box = np.arange(start, start + n + 1)
        orig_vals = u.values[np.ix_(*([box] * N))]
        w1 = _trapezoid_weights(n + 1)
        orig_w = w1 if N == 1 else np.outer(w1, w1)
        scaled_h = h
    tau = lam ** -2 * np.asarray(eval_F(nl, np.maximum(sample, 0.0)))
    if math.isfinite(nl.F0) and np.any(tau >= nl.F0):
        raise ValueError("lam^-2 F(u) leaves the range of F; raise the datum's floor")
    scaled = np.zeros(tau.shape)
    live = np.isfinite(tau)  # tau = inf where u vanishes and F(0) = inf: u_lam = 0 there
    scaled[live] = eval_F_inv(nl, tau[live])
    scaled_int = float(np.sum(density(scaled)) * scaled_h ** N)
    orig_int = float(np.sum(orig_w * density(orig_vals)) * h ** N)
    return QuasiScalingCheck(lam, scaled_int, orig_int)
