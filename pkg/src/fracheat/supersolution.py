"""Explicit supersolutions and numerical verification of ``F[u] <= u``.

Five families are provided:

``power``
    ``F^{-1}(F_{q0}((1+sigma) S(t) F_{q0}^{-1}(F(phi0))))`` for q > 1.
``exp``
    ``F^{-1}(e^{-sigma} exp(S(t) log F(phi0)))`` for q = 1.
``critical-power-low``
    ``(1+sigma)(S(t) phi^alpha)^{1/alpha}`` with ``alpha = N(p-1)/theta``.
``critical-power-high``
    ``(1+sigma)(S(t) phi^p)^{1/p}``.
``critical-exp``
    ``S(t) phi + sigma`` for ``f = e^u``.

Here ``phi0 = max(phi, u0)``.  Every family is a monotone transform of one
semigroup evolution, so ``u(t)`` at any time costs one inverse FFT.

The verifier evaluates ``S(t) phi + int_0^t S(t-s) f(u(s)) ds`` at the nodes
of a uniform time grid.  ``f(u(s))`` is sampled at midpoints of ``ns``
uniform sub-intervals of ``[0, T]``, and the semigroup factor is integrated
exactly over each sub-interval.  ``u(s)`` is always rebuilt from the
formula.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .field import Field, GridSpec, duhamel_integrals
from .nonlinearity import (HypothesisViolation, Nonlinearity, check_inequality_lemmas,
                           epsilon_upper, estimate_q, eval_F_inv_log, log_F, q_value)

VARIANTS = ("power", "exp", "critical-power-low", "critical-power-high", "critical-exp")


class RegimeViolation(HypothesisViolation):
    """The requested family is not a supersolution candidate for this problem."""


class QuadratureNotConverged(ArithmeticError):
    """Doubling the Duhamel nodes kept moving the minimal residual."""


@dataclass(frozen=True)
class SupersolutionParams:
    """Parameters of one supersolution family.

    Attributes
    ----------
    variant : str
        One of ``VARIANTS``.
    sigma : float
        Amplification margin, positive; at most 1 for ``power``.
    q0 : float, optional
        Shifted exponent ``q + eps/2`` (``power`` only); equals ``q`` with
        ``eps = 0`` on the boundary ``r = q - 1``.
    epsilon : float, optional
        Shift ``eps`` (``power`` only).
    u0 : float
        Floor applied to the datum (``phi0 = max(phi, u0)``).
    alpha : float, optional
        Power used by the critical power families.
    r : float, optional
        Integrability exponent the parameters were chosen for.
    """

    variant: str
    sigma: float
    q0: Optional[float] = None
    epsilon: Optional[float] = None
    u0: float = 0.0
    alpha: Optional[float] = None
    r: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.variant == "power":
            if self.sigma > 1:
                raise ValueError("the power family needs 0 < sigma <= 1")
            if self.q0 is None or self.epsilon is None:
                raise ValueError("the power family needs q0 and epsilon")
        if self.variant.startswith("critical-power") and self.alpha is None:
            raise ValueError("critical power families need alpha")
        if self.u0 < 0:
            raise ValueError("u0 must be nonnegative")


def make_params(nl: Nonlinearity, variant: str, sigma: float, N: int = 1,
                theta: float = 2.0, r: Optional[float] = None,
                epsilon: Optional[float] = None) -> SupersolutionParams:
    """Fill in ``q0``, ``eps``, ``u0`` and ``alpha`` for a problem instance.

    ``eps`` defaults to the midpoint of its admissible interval; when
    ``r = q - 1`` the interval is empty and ``q0 = q`` is used.  ``u0`` is
    the largest of 1 and the thresholds located by the inequality scans.
    """
    if variant == "power":
        q = q_value(nl)
        if r is not None and epsilon is None and _at_shift_boundary(q, N, theta, r):
            return _boundary_power_params(nl, q, sigma, r)
        upper = epsilon_upper(q, N, theta, r) if r is not None else epsilon_upper(q)
        if not upper > 0:
            raise RegimeViolation(f"empty admissible eps interval (upper end {upper:.4g})")
        eps = 0.5 * upper if epsilon is None else float(epsilon)
        if not 0 < eps < upper:
            raise RegimeViolation(f"eps = {eps} outside (0, {upper:.6g})")
        q0 = q + eps / 2.0
        growth = estimate_q(nl, q0=q0)
        scan = check_inequality_lemmas(nl, "L3_2ii", sigma=min(sigma, 1.0), eps=eps)
        levels = [1.0, growth.u_threshold, scan.threshold]
        if any(v is None for v in levels):
            raise RegimeViolation("a threshold level could not be located")
        return SupersolutionParams("power", sigma, q0=q0, epsilon=eps,
                                   u0=float(max(levels)), r=r)
    if variant == "exp":
        growth = estimate_q(nl)
        if not growth.satisfies_F2:
            raise RegimeViolation("the exp family needs q = 1 and f'F <= 1 for large u")
        scan = check_inequality_lemmas(nl, "L3_5", sigma=sigma)
        levels = [growth.u_threshold, scan.threshold]
        if any(v is None for v in levels):
            raise RegimeViolation("a threshold level could not be located")
        return SupersolutionParams("exp", sigma, u0=float(max(levels)), r=r)
    if variant == "critical-power-low":
        p = _power_of(nl)
        return SupersolutionParams(variant, sigma, alpha=N * (p - 1.0) / theta, r=r)
    if variant == "critical-power-high":
        return SupersolutionParams(variant, sigma, alpha=_power_of(nl), r=r)
    if variant == "critical-exp":
        return SupersolutionParams(variant, sigma, r=r)
    raise ValueError(f"variant must be one of {VARIANTS}")


def _at_shift_boundary(q: float, N: int, theta: float, r: float) -> bool:
    """``r = q - 1`` above ``N/theta``: no room for a shift, ``q0 = q`` is used instead."""
    return abs(r - (q - 1.0)) <= 1e-12 * max(1.0, r) and theta * r / N > 1.0


def _boundary_power_params(nl: Nonlinearity, q: float, sigma: float,
                           r: float) -> SupersolutionParams:
    growth = estimate_q(nl, q0=q)
    if not growth.q_upper_holds:
        raise RegimeViolation("r = q - 1 needs f'F <= q for large u")
    scan = check_inequality_lemmas(nl, "L3_2ii", sigma=min(sigma, 1.0), eps=q - 1.0, q0=q)
    levels = [1.0, growth.u_threshold, scan.threshold]
    if any(v is None for v in levels):
        raise RegimeViolation("a threshold level could not be located")
    return SupersolutionParams("power", sigma, q0=q, epsilon=0.0, u0=float(max(levels)), r=r)


def _power_of(nl: Nonlinearity) -> float:
    if nl.name != "upow":
        raise RegimeViolation("critical power families are defined for f = u^p")
    return float(nl.params["p"])


def check_regime(nl: Nonlinearity, params: SupersolutionParams, N: int, theta: float) -> None:
    """Raise ``RegimeViolation`` when the family's hypotheses fail."""
    v = params.variant
    if v == "power":
        q = q_value(nl)
        if not q > 1 + 1e-9:
            raise RegimeViolation("the power family needs q > 1")
        if params.r is not None:
            r = params.r
            if not r > N / theta:
                raise RegimeViolation(f"r = {r} is not above N/theta = {N / theta:.6g}")
            if not r >= q - 1:
                raise RegimeViolation(f"r = {r} is below q - 1 = {q - 1:.6g}")
            if _at_shift_boundary(q, N, theta, r) and params.epsilon == 0:
                if abs(params.q0 - q) > 1e-12 or not estimate_q(nl, q0=q).q_upper_holds:
                    raise RegimeViolation("r = q - 1 needs q0 = q and f'F <= q for large u")
            elif not 0 < params.epsilon < epsilon_upper(q, N, theta, r):
                raise RegimeViolation("eps outside its admissible interval")
        elif not 0 < params.epsilon < epsilon_upper(q):
            raise RegimeViolation("eps outside (0, 2(q-1))")
    elif v == "exp":
        if not estimate_q(nl).satisfies_F2:
            raise RegimeViolation("the exp family needs q = 1 and f'F <= 1 for large u")
    elif v == "critical-power-low":
        p = _power_of(nl)
        # the endpoint p = 1 + theta/N (alpha = 1) is admitted: (1+sigma) S(t) phi
        if p < 1 + theta / N - 1e-12:
            raise RegimeViolation(f"p = {p} is below 1 + theta/N")
        if theta < N and p >= N / (N - theta):
            raise RegimeViolation("p >= N/(N-theta): use critical-power-high")
        if abs(params.alpha - N * (p - 1) / theta) > 1e-12:
            raise RegimeViolation("alpha must equal N(p-1)/theta")
    elif v == "critical-power-high":
        p = _power_of(nl)
        if not (theta < N and p >= N / (N - theta)):
            raise RegimeViolation("critical-power-high needs theta < N and p >= N/(N-theta)")
    elif v == "critical-exp":
        if nl.name != "exp":
            raise RegimeViolation("critical-exp is defined for f = e^u")


class SupersolutionFamily:
    """``t -> u(t)`` for one datum, family and grid, built from a cached FFT."""

    def __init__(self, phi: Field, nl: Nonlinearity, params: SupersolutionParams,
                 symbol: Optional[str] = None, check: bool = True):
        spec = phi.spec if symbol is None else phi.spec.with_symbol(symbol)
        if check:
            check_regime(nl, params, spec.dim, spec.theta)
        self.spec, self.nl, self.params = spec, nl, params
        self.phi = phi.values
        self._rate = spec.rate()
        g0, self._post = self._transform()
        self._g0 = g0
        self._g0_hat = np.fft.rfftn(g0)

    def _transform(self) -> tuple[np.ndarray, Callable]:
        nl, P = self.nl, self.params
        phi = self.phi
        sig = P.sigma
        if np.any(phi < 0):
            raise ValueError("the datum must be nonnegative")
        if P.variant == "power":
            p0 = P.q0 / (P.q0 - 1.0)
            phi0 = np.maximum(phi, P.u0)
            lF = log_F(nl, phi0)
            g0 = np.exp(-(math.log(p0 - 1.0) + lF) / (p0 - 1.0))

            def post(v):
                if np.any(v <= 0):
                    raise OverflowError("transformed evolution left (0, inf)")
                log_tau = (1.0 - p0) * np.log((1.0 + sig) * v) - math.log(p0 - 1.0)
                return eval_F_inv_log(nl, log_tau)
            return g0, post
        if P.variant == "exp":
            phi0 = np.maximum(phi, P.u0)
            g0 = log_F(nl, phi0)
            return g0, lambda v: eval_F_inv_log(nl, v - sig)
        if P.variant.startswith("critical-power"):
            a = P.alpha
            return phi ** a, lambda v: (1.0 + sig) * np.maximum(v, 0.0) ** (1.0 / a)
        return phi.astype(float), lambda v: v + sig

    def semigroup(self, t: float) -> np.ndarray:
        """``S(t)`` applied to the transformed datum."""
        if t == 0:
            return self._g0
        return np.fft.irfftn(self._g0_hat * np.exp(-t * self._rate), s=self.spec.shape,
                             axes=tuple(range(self.spec.dim)))

    def at(self, t: float) -> np.ndarray:
        with np.errstate(over="raise", invalid="raise"):
            try:
                u = np.asarray(self._post(self.semigroup(t)), dtype=float)
            except (FloatingPointError, ValueError) as exc:
                raise OverflowError(f"supersolution formula degenerates at t = {t:g}") from exc
        if not np.all(np.isfinite(u)):
            raise OverflowError(f"supersolution formula degenerates at t = {t:g}")
        return u


def build_supersolution(phi: Field, nl: Nonlinearity, params: SupersolutionParams,
                        t: float, symbol: Optional[str] = None) -> Field:
    """Evaluate one supersolution family at time ``t >= 0``.

    Raises
    ------
    RegimeViolation
        The family's hypotheses fail for this ``nl``, ``N`` and ``theta``.
    OverflowError
        ``F^{-1}`` was requested outside its range, which signals that ``t``
        is beyond the family's horizon.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    fam = SupersolutionFamily(phi, nl, params, symbol=symbol)
    return Field(fam.spec, fam.at(t), f"supersolution {params.variant} t={t!r}")


@dataclass
class SupersolutionCertificate:
    """Outcome of one verification at horizon ``T``."""

    params: SupersolutionParams
    grid: GridSpec
    nonlinearity: str
    T: float
    t_grid: np.ndarray = field(repr=False)
    min_residual: float
    sup_norm: float
    quadrature_resolution: int
    residual_history: list
    worst_time: float
    residual_field: Optional[Field] = field(default=None, repr=False)

    @property
    def tol(self) -> float:
        return 1e-6 * self.sup_norm

    @property
    def valid(self) -> bool:
        return self.min_residual >= -self.tol

    @property
    def verdict(self) -> str:
        return "VALID" if self.valid else "INVALID"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "nonlinearity": self.nonlinearity,
            "params": asdict(self.params),
            "grid": asdict(self.grid),
            "T": self.T,
            "nt": int(len(self.t_grid)),
            "ns": self.quadrature_resolution,
            "min_residual": self.min_residual,
            "tolerance": self.tol,
            "sup_norm": self.sup_norm,
            "worst_time": self.worst_time,
            "residual_by_ns": self.residual_history,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _residuals(fam: SupersolutionFamily, phi_hat: np.ndarray, T: float, nt: int, ns: int):
    nl = fam.nl
    f = lambda i, s: nl.f(fam.at(s))
    with np.errstate(over="raise"):
        try:
            duh = duhamel_integrals(fam.spec, f, T, nt, ns)
        except FloatingPointError as exc:
            raise OverflowError("f(u) overflowed in the Duhamel sum") from exc
    worst, worst_k, worst_field, sup = math.inf, 0, None, 0.0
    for k in range(nt):
        t = (k + 1) * T / nt
        u = fam.at(t)
        free = np.fft.irfftn(phi_hat * np.exp(-t * fam._rate), s=fam.spec.shape,
                             axes=tuple(range(fam.spec.dim)))
        res = u - free - duh[k]
        sup = max(sup, float(np.max(np.abs(u))))
        m = float(res.min())
        if m < worst:
            worst, worst_k, worst_field = m, k, res
    return worst, (worst_k + 1) * T / nt, worst_field, sup


def verify_supersolution(phi: Field, nl: Nonlinearity, params: SupersolutionParams,
                         T: float, nt: int = 16, ns: int = 64, max_ns: int = 4096,
                         symbol: Optional[str] = "lattice",
                         check: bool = True) -> SupersolutionCertificate:
    """Check ``S(t) phi + int_0^t S(t-s) f(u(s)) ds <= u(t)`` on ``(0, T]``.

    ``ns`` is doubled until the minimal residual moves by less than 10% of
    ``max(|min residual|, 1e-6 ||u||_inf)``.

    Parameters
    ----------
    symbol
        Semigroup symbol used for verification; ``"lattice"`` (default) keeps
        the discrete kernel positive so the comparison argument survives
        discretisation.  ``None`` keeps the datum's own symbol.
    check
        Enforce the family's hypotheses.  Disabling it lets the same formula
        be tried outside its regime, where it is expected to fail.

    Raises
    ------
    QuadratureNotConverged
        Stability was not reached by ``max_ns`` nodes.
    OverflowError
        The family degenerates before ``T``.
    """
    if not T > 0 or nt < 1:
        raise ValueError("need T > 0 and nt >= 1")
    fam = SupersolutionFamily(phi, nl, params, symbol=symbol, check=check)
    phi_hat = np.fft.rfftn(phi.values)
    ns = max(nt, nt * math.ceil(ns / nt))
    history = []
    prev = None
    while True:
        worst, t_worst, res_field, sup = _residuals(fam, phi_hat, T, nt, ns)
        history.append([ns, worst])
        if prev is not None and abs(worst - prev) < 0.1 * max(abs(worst), 1e-6 * sup):
            break
        if 2 * ns > max_ns:
            raise QuadratureNotConverged(
                f"min residual still moving at ns = {ns}: {history}")
        prev = worst
        ns *= 2
    t_grid = np.arange(1, nt + 1) * T / nt
    return SupersolutionCertificate(params, fam.spec, nl.spec, T, t_grid, worst, sup, ns,
                                    history, t_worst,
                                    Field(fam.spec, res_field, "residual at worst time"))


@dataclass
class CertificateSearch:
    """Outcome of the horizon search: the certificate found, if any, and the trail."""

    certificate: Optional[SupersolutionCertificate]
    trail: list

    @property
    def valid(self) -> bool:
        return self.certificate is not None and self.certificate.valid


def find_certificate(phi: Field, nl: Nonlinearity, params: SupersolutionParams,
                     T_start: float = 1.0, T_min: float = 1e-6, nt: int = 16, ns: int = 64,
                     max_ns: int = 4096, symbol: Optional[str] = "lattice",
                     check: bool = True) -> CertificateSearch:
    """Halve ``T`` from ``T_start`` until a VALID certificate appears or ``T < T_min``.

    The last certificate computed is returned when none is valid, so the
    caller can inspect where the residual went negative.
    """
    T = T_start
    trail, last = [], None
    while T >= T_min:
        try:
            cert = verify_supersolution(phi, nl, params, T, nt=nt, ns=ns, max_ns=max_ns,
                                        symbol=symbol, check=check)
        except (OverflowError, QuadratureNotConverged) as exc:
            trail.append({"T": T, "outcome": type(exc).__name__})
        else:
            last = cert
            trail.append({"T": T, "outcome": cert.verdict, "min_residual": cert.min_residual})
            if cert.valid:
                return CertificateSearch(cert, trail)
        T *= 0.5
    return CertificateSearch(last, trail)
