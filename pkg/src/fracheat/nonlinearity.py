"""Calculus of the reaction term f.

Every quantity derived from ``f`` goes through this module: the blow-up
transform ``F(u) = int_u^inf dt / f(t)``, its inverse, the canonical pair
``F_q``, the convexifying map ``Phi_alpha = F_alpha^{-1} o F`` and the growth
exponent ``q = lim f'(u) F(u)``.

Families are stored through ``log f``, its derivative ``f'/f`` and a stable
increment ``log f(u + dv) - log f(u)``.  That keeps quadratures, growth
ratios and convexity tests finite long after ``f`` itself overflows.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize, special


class DivergenceError(ArithmeticError):
    """F(u) is infinite (1/f is not integrable at infinity)."""


class NoLimitError(ArithmeticError):
    """f'(u) F(u) shows no numerically stable limit."""


class HypothesisViolation(ValueError):
    """A requested check does not apply to this growth regime."""


@dataclass(frozen=True)
class Nonlinearity:
    """A registered reaction term with overflow-safe evaluators.

    Attributes
    ----------
    name, params
        Family name and its real parameters, e.g. ``("upow", {"p": 3})``.
    f_fn, fprime_fn
        Direct evaluators of ``f`` and ``f'`` (may overflow to ``inf``).
    log_f, dlog_f
        ``log f`` and ``f'/f``.
    log_ratio
        ``(u, dv) -> log f(u + dv) - log f(u)`` computed without cancellation.
    closed_form_F, closed_form_F_inv
        Exact ``F`` and ``F^{-1}`` when the family has them.
    q_known
        Exact growth exponent, used only for reporting and regime defaults.
    F0
        ``F(0)``, possibly ``inf``.
    u_cap
        Largest argument for which ``log f`` is still a finite double.
    """

    name: str
    params: dict
    f_fn: Callable
    fprime_fn: Callable
    log_f: Callable
    dlog_f: Callable
    log_ratio: Callable
    closed_form_F: Optional[Callable] = None
    closed_form_F_inv: Optional[Callable] = None
    q_known: Optional[float] = None
    F0: float = math.inf
    u_cap: float = 1e300

    @property
    def spec(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ":".join(f"{v:g}" for v in self.params.values())

    def f(self, u):
        with np.errstate(over="ignore"):
            return self.f_fn(np.asarray(u, dtype=float))

    def fprime(self, u):
        with np.errstate(over="ignore"):
            return self.fprime_fn(np.asarray(u, dtype=float))

    def __repr__(self) -> str:
        return f"Nonlinearity({self.spec!r})"


# ---------------------------------------------------------------- families

def _upow(p: float) -> Nonlinearity:
    if not p > 1:
        raise ValueError("upow needs p > 1 (F diverges otherwise)")

    def F(u):
        with np.errstate(divide="ignore"):
            return np.power(u, 1.0 - p) / (p - 1.0)

    def F_inv(tau):
        return np.power((p - 1.0) * tau, -1.0 / (p - 1.0))

    with np.errstate(divide="ignore"):
        return Nonlinearity(
            name="upow", params={"p": p},
            f_fn=lambda u: np.power(u, p),
            fprime_fn=lambda u: p * np.power(u, p - 1.0),
            log_f=lambda u: p * np.log(u),
            dlog_f=lambda u: p / u,
            log_ratio=lambda u, dv: p * np.log1p(dv / u),
            closed_form_F=F, closed_form_F_inv=F_inv,
            q_known=p / (p - 1.0), F0=math.inf, u_cap=1e300,
        )


def _exp() -> Nonlinearity:
    return Nonlinearity(
        name="exp", params={},
        f_fn=np.exp, fprime_fn=np.exp,
        log_f=lambda u: np.asarray(u, dtype=float),
        dlog_f=lambda u: np.ones_like(np.asarray(u, dtype=float)),
        log_ratio=lambda u, dv: np.asarray(dv, dtype=float) + 0.0 * u,
        closed_form_F=lambda u: np.exp(-np.asarray(u, dtype=float)),
        closed_form_F_inv=lambda tau: -np.log(tau),
        q_known=1.0, F0=1.0, u_cap=1e300,
    )


def _powlog(p: float) -> Nonlinearity:
    # f(u) = (u+1)^p log(u+1)
    if not p > 1:
        raise ValueError("powlog needs p > 1")

    def log_f(u):
        L = np.log1p(u)
        with np.errstate(divide="ignore"):
            return p * L + np.log(L)

    def dlog_f(u):
        L = np.log1p(u)
        with np.errstate(divide="ignore"):
            return p / (1.0 + u) + 1.0 / ((1.0 + u) * L)

    def log_ratio(u, dv):
        L = np.log1p(u)
        step = np.log1p(dv / (1.0 + u))
        return p * step + np.log1p(step / L)

    return Nonlinearity(
        name="powlog", params={"p": p},
        f_fn=lambda u: np.power(u + 1.0, p) * np.log1p(u),
        fprime_fn=lambda u: np.power(u + 1.0, p - 1.0) * (p * np.log1p(u) + 1.0),
        log_f=log_f, dlog_f=dlog_f, log_ratio=log_ratio,
        q_known=p / (p - 1.0), F0=math.inf, u_cap=1e300,
    )


def _expupow(p: float) -> Nonlinearity:
    # f(u) = exp(u^p)
    if not p >= 1:
        raise ValueError("expupow needs p >= 1")

    def log_ratio(u, dv):
        u = np.asarray(u, dtype=float)
        if np.all(u == 0):
            return np.power(dv, p)
        return np.power(u, p) * np.expm1(p * np.log1p(dv / u))

    return Nonlinearity(
        name="expupow", params={"p": p},
        f_fn=lambda u: np.exp(np.power(u, p)),
        fprime_fn=lambda u: p * np.power(u, p - 1.0) * np.exp(np.power(u, p)),
        log_f=lambda u: np.power(u, p),
        dlog_f=lambda u: p * np.power(u, p - 1.0),
        log_ratio=log_ratio,
        q_known=1.0, F0=float(special.gamma(1.0 + 1.0 / p)),
        u_cap=min(1e300, 1e300 ** (1.0 / p)),
    )


def _iterexp(n: int) -> Nonlinearity:
    # f = exp(exp(...exp(u))), n-fold; log f = E_{n-1}(u)
    n = int(n)
    if n < 1:
        raise ValueError("iterexp needs n >= 1")

    def tower(u, k):
        v = np.asarray(u, dtype=float)
        with np.errstate(over="ignore"):
            for _ in range(k):
                v = np.exp(v)
        return v

    def dlog_f(u):
        out = np.ones_like(np.asarray(u, dtype=float))
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(1, n):
                out = out * tower(u, k)
        return out

    def log_ratio(u, dv):
        d = np.asarray(dv, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(1, n):
                d = tower(u, k) * np.expm1(d)
        return d

    cap = 1e300
    for _ in range(n - 1):
        cap = math.log(cap)
    F0 = _quad_F0_iterexp(n)
    return Nonlinearity(
        name="iterexp", params={"n": float(n)},
        f_fn=lambda u: tower(u, n),
        fprime_fn=lambda u: tower(u, n) * dlog_f(u),
        log_f=lambda u: tower(u, n - 1), dlog_f=dlog_f, log_ratio=log_ratio,
        q_known=1.0, F0=F0, u_cap=cap,
    )


def _quad_F0_iterexp(n: int) -> float:
    def integrand(t):
        v = t
        for _ in range(n):
            if v > 700:
                return 0.0
            v = math.exp(v)
        return 1.0 / v
    val, _ = integrate.quad(integrand, 0.0, 50.0, epsabs=0, epsrel=1e-13, limit=200)
    return val


_REGISTRY = {
    "upow": lambda args: _upow(float(args[0])),
    "exp": lambda args: _exp(),
    "powlog": lambda args: _powlog(float(args[0])),
    "expupow": lambda args: _expupow(float(args[0])),
    "iterexp": lambda args: _iterexp(int(float(args[0]))),
}


def make_nonlinearity(spec: str) -> Nonlinearity:
    """Build a registered nonlinearity from ``"name:param"``.

    Known names are ``upow:p``, ``exp``, ``powlog:p`` for
    ``(u+1)^p log(u+1)``, ``expupow:p`` for ``exp(u^p)`` and ``iterexp:n``
    for the n-fold iterated exponential.
    """
    name, *args = spec.strip().split(":")
    if name not in _REGISTRY:
        raise ValueError(f"unknown nonlinearity {name!r}; known: {sorted(_REGISTRY)}")
    need = 0 if name == "exp" else 1
    if len(args) != need:
        raise ValueError(f"{name} takes {need} parameter(s), got {len(args)}")
    return _REGISTRY[name](args)


def registered_names() -> list[str]:
    return sorted(_REGISTRY)


# ------------------------------------------------------- F by quadrature

_TAIL_REL = 1e-14


def _scale(nl: Nonlinearity, u: float) -> float:
    d = float(nl.dlog_f(u))
    if not d > 0 or not math.isfinite(d):
        return 1.0 + u
    return min(1.0 / d, 1.0 + u)


def _scaled_integral(nl: Nonlinearity, u: float, s: float) -> float:
    """``int_0^inf f(u) / f(u + s w) dw``, with a decay-law tail."""

    def h(w):
        with np.errstate(over="ignore", invalid="ignore"):
            r = nl.log_ratio(u, w * s)
        return math.exp(-float(r)) if r == r else 0.0

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        total, _ = integrate.quad(h, 0.0, 1.0, epsabs=0, epsrel=1e-12, limit=200)
        b = 1.0
        while True:
            a, b = b, 10.0 * b
            part, _ = integrate.quad(h, a, b, epsabs=0, epsrel=1e-12, limit=200)
            total += part
            hb, ha = h(b), h(a)
            if hb == 0.0:
                return total
            m = math.log(ha / hb) / math.log(10.0)
            if m > 1.0 and hb * b / (m - 1.0) < _TAIL_REL * total:
                return total + hb * b / (m - 1.0)
            if b >= 1e15:
                if m <= 1.0 + 1e-3:
                    raise DivergenceError(
                        f"1/f decays like t^-{m:.3g} for {nl.spec}; F(u) is infinite")
                return total + hb * b / (m - 1.0)


def _log_F_scalar(nl: Nonlinearity, u: float) -> float:
    if u < 0:
        raise ValueError("F is defined for u >= 0 only")
    if u == 0:
        return math.log(nl.F0) if math.isfinite(nl.F0) else math.inf
    if nl.closed_form_F is not None:
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            if nl.name == "exp":
                return -u
            if nl.name == "upow":
                p = nl.params["p"]
                return (1.0 - p) * math.log(u) - math.log(p - 1.0)
            return math.log(float(nl.closed_form_F(u)))
    s = _scale(nl, u)
    I = _scaled_integral(nl, u, s)
    return math.log(s) - float(nl.log_f(u)) + math.log(I)


def log_F(nl: Nonlinearity, u):
    """Natural log of F, finite even where F itself underflows."""
    arr = np.asarray(u, dtype=float)
    out = np.array([_log_F_scalar(nl, float(v)) for v in arr.ravel()]).reshape(arr.shape)
    return out if arr.ndim else float(out)


def eval_F(nl: Nonlinearity, u):
    """Blow-up transform ``F(u) = int_u^inf dt/f(t)``.

    Closed forms are used for ``upow`` and ``exp``.  Other families use the
    substitution ``t = u + s w`` with ``s`` the local e-folding length of f,
    adaptive Gauss-Kronrod panels over decades of ``w`` and a fitted power
    tail.  ``u = 0`` returns the stored ``F(0)``, which may be ``inf``.

    Raises
    ------
    ValueError
        For negative arguments.
    DivergenceError
        When 1/f is not integrable at infinity.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0):
        raise ValueError("F is defined for u >= 0 only")
    if nl.closed_form_F is not None:
        with np.errstate(divide="ignore", over="ignore"):
            out = np.where(arr == 0, nl.F0, nl.closed_form_F(np.where(arr == 0, 1.0, arr)))
        return out if arr.ndim else float(out)
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(log_F(nl, arr))


def growth_ratio(nl: Nonlinearity, u):
    """``f'(u) F(u)`` evaluated without forming f or F separately."""
    arr = np.asarray(u, dtype=float)
    vals = []
    for v in arr.ravel():
        v = float(v)
        if nl.name == "upow":
            p = nl.params["p"]
            vals.append(p / (p - 1.0))
        elif nl.name == "exp":
            vals.append(1.0)
        else:
            s = _scale(nl, v)
            vals.append(float(nl.dlog_f(v)) * s * _scaled_integral(nl, v, s))
    out = np.array(vals).reshape(arr.shape)
    return out if arr.ndim else float(out)


def eval_F_inv(nl: Nonlinearity, tau):
    """Inverse of F on ``(0, F(0))``.

    Closed forms where available, otherwise Brent's method on ``log F`` in
    the variable ``log u`` after geometric bracketing.
    """
    arr = np.asarray(tau, dtype=float)
    if np.any(~(arr > 0)) or np.any(arr >= nl.F0):
        raise ValueError(f"tau must lie in (0, F(0)) = (0, {nl.F0:g})")
    if nl.closed_form_F_inv is not None:
        out = nl.closed_form_F_inv(arr)
        return out if arr.ndim else float(out)
    out = np.array([_F_inv_scalar(nl, float(t)) for t in arr.ravel()]).reshape(arr.shape)
    return out if arr.ndim else float(out)


def eval_F_inv_log(nl: Nonlinearity, log_tau):
    """``F^{-1}(exp(log_tau))`` without forming tau, for tau below float range."""
    arr = np.asarray(log_tau, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr >= math.log(nl.F0)):
        raise ValueError("log tau must be finite and below log F(0)")
    if nl.name == "exp":
        out = -arr
    elif nl.name == "upow":
        p = nl.params["p"]
        out = np.exp(-(math.log(p - 1.0) + arr) / (p - 1.0))
    else:
        out = np.array([_F_inv_scalar(nl, float(t), log_target=True)
                        for t in arr.ravel()]).reshape(arr.shape)
    return out if arr.ndim else float(out)


def _F_inv_scalar(nl: Nonlinearity, tau: float, log_target: bool = False) -> float:
    target = tau if log_target else math.log(tau)
    g = lambda x: _log_F_scalar(nl, math.exp(x)) - target
    lo, hi = -1.0, 1.0
    while g(hi) > 0:
        lo, hi = hi, 2.0 * hi + 1.0
        if math.exp(hi) > nl.u_cap:
            raise ValueError("tau below the representable range of F")
    while g(lo) < 0:
        hi, lo = lo, 2.0 * lo - 1.0
        if lo < -700:
            raise ValueError("tau at or above F(0)")
    x = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    return math.exp(x)


# --------------------------------------------------- canonical pair, Phi

def _conj(q: float) -> float:
    return q / (q - 1.0)


def canonical_F_q(q: float, u):
    """``F_q(u)``: ``u^{1-p}/(p-1)`` with ``1/p + 1/q = 1``, or ``e^{-u}`` at q = 1."""
    if q < 1:
        raise ValueError("q must be >= 1")
    u = np.asarray(u, dtype=float)
    if q == 1:
        out = np.exp(-u)
    else:
        p = _conj(q)
        with np.errstate(divide="ignore"):
            out = np.power(u, 1.0 - p) / (p - 1.0)
    return out if out.ndim else float(out)


def canonical_F_q_inv(q: float, tau):
    if q < 1:
        raise ValueError("q must be >= 1")
    tau = np.asarray(tau, dtype=float)
    if q == 1:
        out = -np.log(tau)
    else:
        p = _conj(q)
        out = np.power((p - 1.0) * tau, -1.0 / (p - 1.0))
    return out if out.ndim else float(out)


def phi_alpha(nl: Nonlinearity, alpha: float, u):
    """``Phi_alpha(u) = F_alpha^{-1}(F(u))``, increasing in u.

    Equals ``(alpha-1)^(alpha-1) F(u)^-(alpha-1)`` for alpha > 1 and
    ``-log F(u)`` for alpha = 1; evaluated through ``log F``.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    lf = log_F(nl, u)
    if alpha == 1:
        return -lf
    a = alpha - 1.0
    with np.errstate(over="ignore"):
        return np.exp(a * math.log(a) - a * np.asarray(lf)) if np.ndim(lf) else \
            math.exp(a * math.log(a) - a * lf)


# ----------------------------------------------------------- growth (q)

@dataclass
class GrowthReport:
    """Tail behaviour of ``g(u) = f'(u) F(u)``.

    ``u_threshold`` is the least sampled u from which ``g <= q0 + tol``
    holds on the whole remaining grid (None if it fails at the end).
    ``convex_above`` is the least sampled u from which the second
    differences of f stay nonnegative.
    """

    q_estimate: float
    q_upper_holds: bool
    u_threshold: Optional[float]
    convex_above: Optional[float]
    satisfies_F2: bool
    q0: float
    extrapolation_gap: float
    method: str
    u_grid: np.ndarray = field(repr=False, default=None)
    g_values: np.ndarray = field(repr=False, default=None)


def _growth_grid(nl: Nonlinearity) -> np.ndarray:
    top = min(math.log2(nl.u_cap), 1000.0)
    lo = -4.0
    step = min(0.25, (top - lo) / 48.0)
    fine = np.arange(lo, min(top, 20.0) + 1e-12, step)
    coarse = []
    k = 20.0 * 2 ** 0.5
    while k < top:
        coarse.append(k)
        k *= 2 ** 0.5
    chain = [top / 8, top / 4, top / 2, top] if top >= 64 else []
    e = np.unique(np.concatenate([fine, coarse, chain, [top]]))
    return np.power(2.0, e)


def _tail_threshold(u: np.ndarray, ok: np.ndarray) -> Optional[float]:
    if not ok[-1]:
        return None
    bad = np.nonzero(~ok)[0]
    return float(u[0] if bad.size == 0 else u[bad[-1] + 1])


def convexity_mask(nl: Nonlinearity, u: np.ndarray, rel_step: float = 1e-3) -> np.ndarray:
    """True where the scaled second difference of f is nonnegative."""
    out = np.empty(u.shape, dtype=bool)
    for i, v in enumerate(u):
        h = rel_step * v
        with np.errstate(over="ignore", invalid="ignore"):
            up = np.expm1(float(nl.log_ratio(v, h)))
            dn = np.expm1(float(nl.log_ratio(v, -h)))
        s = up + dn
        out[i] = bool(s >= -1e-12 * max(1.0, abs(up))) if s == s else True
    return out


def estimate_q(nl: Nonlinearity, q0: Optional[float] = None, tol: float = 1e-9) -> GrowthReport:
    """Estimate ``q = lim f'(u)F(u)`` and the (F2)-type tail conditions.

    ``g`` is sampled on a geometric grid ``u = 2^k``.  If the last two
    doubling-chain samples already agree to 1e-9 the last value is taken.
    Otherwise a two-level Richardson table in ``h = 1/log u`` with ratio 2
    is used (the ``(u+1)^p log(u+1)`` family converges like ``1/log u``).

    Raises
    ------
    NoLimitError
        When neither the raw tail nor the extrapolants settle to 1e-3.
    """
    u = _growth_grid(nl)
    g = growth_ratio(nl, u)
    if not np.all(np.isfinite(g)):
        raise NoLimitError("f'F is not finite on the sampled grid")
    top = math.log2(u[-1])
    raw_gap = abs(g[-1] - float(growth_ratio(nl, 2.0 ** (top / 2))))
    if raw_gap < 1e-9 or top < 64:
        q_est, gap, method = float(g[-1]), raw_gap, "tail-value"
    else:
        chain = np.array([growth_ratio(nl, 2.0 ** (top / m)) for m in (8, 4, 2, 1)])
        r1 = 2.0 * chain[1:] - chain[:-1]
        r2 = (4.0 * r1[1:] - r1[:-1]) / 3.0
        q_est, gap, method = float(r2[-1]), float(abs(r2[-1] - r2[-2])), "richardson"
    if gap > 1e-3:
        raise NoLimitError(f"f'F tail does not settle (gap {gap:.3g}) for {nl.spec}")
    if q_est < 1 - 1e-6:
        warnings.warn(f"estimated q = {q_est} < 1 contradicts the q >= 1 bound")
    q0 = q_est if q0 is None else q0
    thr = _tail_threshold(u, g <= q0 + tol)
    tail = u >= u[len(u) * 3 // 4]
    upper = bool(np.all(g[tail] <= q0 + tol))
    conv = convexity_mask(nl, u)
    convex_above = _tail_threshold(u, conv)
    F2 = False
    if convex_above is not None:
        one = _tail_threshold(u, g <= 1.0 + tol)
        F2 = one is not None
    return GrowthReport(q_est, upper, thr, convex_above, F2, q0, gap, method, u, g)


def q_value(nl: Nonlinearity) -> float:
    """Exact q when known, otherwise the estimate."""
    return nl.q_known if nl.q_known is not None else estimate_q(nl).q_estimate


# ------------------------------------------------------ lemma scanning

LEMMAS = ("L3_2i", "L3_2ii", "L3_5", "L4_2", "L4_3")


def epsilon_upper(q: float, N: Optional[int] = None, theta: Optional[float] = None,
                  r: Optional[float] = None) -> float:
    """Upper end of the admissible interval ``0 < eps < min{theta r/N - 1, r - q + 1, 2(q-1)}``.

    Without a problem instance only the ``2(q-1)`` term applies.
    """
    bound = 2.0 * (q - 1.0)
    if N is not None and theta is not None and r is not None:
        bound = min(bound, theta * r / N - 1.0, r - q + 1.0)
    return bound


@dataclass
class LemmaScan:
    """Sampled slack of one inequality (log RHS - log LHS)."""

    which: str
    params: dict
    grid: np.ndarray = field(repr=False)
    slack: np.ndarray = field(repr=False)
    threshold: Optional[float]
    min_slack: float
    witness: float
    tol: float

    @property
    def holds(self) -> bool:
        return self.threshold is not None and self.min_slack >= -self.tol


def _scan_grid(nl: Nonlinearity, lo: float = 2.0 ** -4, hi_exp: float = 40.0) -> np.ndarray:
    top = min(hi_exp, math.log2(nl.u_cap) - 1.0)
    return np.power(2.0, np.arange(math.log2(lo), top + 1e-12, 0.25))


def _require_q(q: float, which: str, want_one: bool) -> None:
    is_one = abs(q - 1.0) < 1e-6
    if want_one and not is_one:
        raise HypothesisViolation(f"{which} needs q = 1, this f has q = {q:.6g}")
    if not want_one and is_one:
        raise HypothesisViolation(f"{which} needs q > 1, this f has q = 1")


def check_inequality_lemmas(nl: Nonlinearity, which: str, tol: float = 1e-10,
                            grid: Optional[np.ndarray] = None, **params) -> LemmaScan:
    """Scan one of the threshold inequalities used by the supersolutions.

    Parameters
    ----------
    which
        ``L3_2i``: ``F(u)^{-(q0-1)+eps} <= C u`` on ``u >= 1``
        (params ``eps``, ``q``, ``C``; ``C`` defaults to the sampled sup so the
        bound is tight somewhere on the grid).
        ``L3_2ii``: ``F(u/sqrt(1+sigma)) <= (1+sigma)^(p0-1) F(u)``
        (params ``sigma`` in [0, 1], ``eps``, ``q``).
        ``L3_5``: ``F(u - C1 F(u)^a) <= e^sigma F(u)``, q = 1
        (params ``sigma``, ``a``, ``C1``).
        ``L4_2``: ``F(s)^beta <= F(beta s)``, q > 1 (param ``beta``).
        ``L4_3``: ``F(s)^beta <= F(s + C1 F(s)^gamma)``, q = 1
        (params ``beta``, ``gamma``, ``C1``).
    tol
        Slack tolerance in log space.

    Returns
    -------
    LemmaScan
        ``threshold`` is the least grid point from which the slack stays
        ``>= -tol`` to the end of the grid; ``min_slack`` is taken over that
        tail.
    """
    if which not in LEMMAS:
        raise ValueError(f"unknown lemma {which!r}; choose from {LEMMAS}")
    q = float(params.pop("q", q_value(nl)))
    used: dict = {"q": q}
    u = _scan_grid(nl) if grid is None else np.asarray(grid, dtype=float)

    if which in ("L3_2i", "L3_2ii"):
        _require_q(q, which, want_one=False)
        eps = float(params.get("eps", q - 1.0))
        if not 0 < eps < 2.0 * (q - 1.0):
            raise HypothesisViolation(f"eps = {eps} outside (0, 2(q-1))")
        q0 = float(params.get("q0", q + eps / 2.0))
        used.update(eps=eps, q0=q0)
        if which == "L3_2i":
            u = u[u >= 1.0]
            expo = q0 - 1.0 - eps
            core = np.log(u) + expo * log_F(nl, u)
            C = params.get("C")
            logC = float(-core.min()) + 1e-13 if C is None else math.log(C)
            used["C"] = math.exp(logC)
            slack = logC + core
        else:
            sigma = float(params.get("sigma", 1.0))
            if not 0 <= sigma <= 1:
                raise HypothesisViolation("sigma must lie in [0, 1]")
            used["sigma"] = sigma
            p0m1 = 1.0 / (q0 - 1.0)
            slack = p0m1 * math.log1p(sigma) + log_F(nl, u) - log_F(nl, u / math.sqrt(1 + sigma))
    elif which == "L3_5":
        _require_q(q, which, want_one=True)
        sigma = float(params.get("sigma", 1.0))
        a = float(params.get("a", 1.0))
        C1 = float(params.get("C1", 1.0))
        used.update(sigma=sigma, a=a, C1=C1)
        lf = log_F(nl, u)
        arg = u - C1 * np.exp(a * lf)
        slack = np.full(u.shape, -np.inf)
        ok = arg > 0
        slack[ok] = sigma + lf[ok] - log_F(nl, arg[ok])
    elif which == "L4_2":
        _require_q(q, which, want_one=False)
        beta = float(params.get("beta", 2.0))
        used["beta"] = beta
        slack = log_F(nl, beta * u) - beta * log_F(nl, u)
    else:
        _require_q(q, which, want_one=True)
        beta = float(params.get("beta", 2.0))
        gamma = float(params.get("gamma", 1.0))
        C1 = float(params.get("C1", 1.0))
        used.update(beta=beta, gamma=gamma, C1=C1)
        lf = log_F(nl, u)
        slack = log_F(nl, u + C1 * np.exp(gamma * lf)) - beta * lf

    slack = np.asarray(slack, dtype=float)
    thr = _tail_threshold(u, slack >= -tol)
    if thr is None:
        tail = np.ones(u.shape, dtype=bool)
    else:
        tail = u >= thr
    i = int(np.argmin(np.where(tail, slack, np.inf)))
    return LemmaScan(which, used, u, slack, thr, float(slack[i]), float(u[i]), tol)


def lemma27_bound_ok(nl: Nonlinearity, u0: float, q0: float, grid: np.ndarray) -> bool:
    """``f(u) F(u)^q0 <= f(u0) F(u0)^q0 (1 + 1e-8)`` for sampled ``u >= u0``."""
    ref = float(nl.log_f(u0)) + q0 * log_F(nl, u0)
    g = grid[grid >= u0]
    vals = nl.log_f(g) + q0 * log_F(nl, g)
    return bool(np.all(vals <= ref + math.log1p(1e-8)))
