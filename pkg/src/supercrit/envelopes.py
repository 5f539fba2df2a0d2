"""Closed-form comparison functions for the heat kernel of Delta - V.

Every envelope is computed in log space first; ``EnvelopeValue.value`` is the
exponentiated result. The multiplicative constants of the two-sided estimates
are never fixed here: they enter through :class:`EnvelopeConstants` and are
fitted by :mod:`supercrit.verify`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .specfun import E_MINUS_1, bessel_k_ratio, log_bessel_k, log_gaussian_q, log_shift

SMALL_TIME_MAX = 4.0


@dataclass(frozen=True)
class ModelParams:
    d: int
    beta: float
    kappa: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be an integer >= 1, got {self.d}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def sqrt_kappa(self) -> float:
        return math.sqrt(self.kappa)

    @property
    def nu(self) -> float:
        """Bessel order of the harmonic profile."""
        return (self.d - 2) / (2 * self.beta)


@dataclass(frozen=True)
class EnvelopeConstants:
    c_gauss: float = 1.0
    c_kill: float = 1.0
    eta2: float = 1.0

    def __post_init__(self):
        for name in ("c_gauss", "c_kill", "eta2"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class EnvelopeValue:
    value: float
    constants_used: EnvelopeConstants
    log_value: float = field(default=float("nan"))


def _positive(name, r):
    if np.any(np.asarray(r) <= 0) or np.any(np.isnan(r)):
        raise ValueError(f"{name} must be positive, got {r!r}")


def _scalar(x):
    return x if np.ndim(x) else float(x)


# --- h and its Bessel counterpart -------------------------------------------

def log_h(p: ModelParams, r):
    _positive("r", r)
    s = np.minimum(np.asarray(r, dtype=float), 1.0)
    out = -0.5 * (p.d - 2 - p.beta) * np.log(s) - p.sqrt_kappa / (p.beta * s**p.beta)
    return _scalar(out)


def h(p: ModelParams, r):
    """(r^1)^{-(d-2-beta)/2} exp(-sqrt(kappa) / (beta (r^1)^beta)), frozen on [1, inf)."""
    return _scalar(np.exp(log_h(p, r)))


def _z(p, r):
    return p.sqrt_kappa / (p.beta * np.asarray(r, dtype=float) ** p.beta)


def log_h_tilde(p: ModelParams, r):
    _positive("r", r)
    r = np.asarray(r, dtype=float)
    return _scalar(-0.5 * (p.d - 2) * np.log(r) + log_bessel_k(p.nu, _z(p, r)))


def h_tilde(p: ModelParams, r):
    """Radial harmonic function of Delta - kappa |x|^{-2-2beta}; increasing in r."""
    return _scalar(np.exp(log_h_tilde(p, r)))


def h_tilde_logderiv(p: ModelParams, r):
    """h_tilde'(r) / h_tilde(r), evaluated without forming either factor."""
    _positive("r", r)
    r = np.asarray(r, dtype=float)
    ratio = bessel_k_ratio(p.nu - 1.0, p.nu, _z(p, r))
    return _scalar(p.sqrt_kappa * r ** (-1.0 - p.beta) * ratio)


def h_tilde_prime(p: ModelParams, r):
    _positive("r", r)
    r = np.asarray(r, dtype=float)
    logv = 0.5 * math.log(p.kappa) - (0.5 * p.d + p.beta) * np.log(r) + log_bessel_k(p.nu - 1.0, _z(p, r))
    return _scalar(np.exp(logv))


def h_tilde_second(p: ModelParams, r):
    """Second derivative recovered from the radial ODE of h_tilde."""
    r = np.asarray(r, dtype=float)
    ht = np.asarray(h_tilde(p, r))
    return _scalar(p.kappa * r ** (-2.0 - 2.0 * p.beta) * ht - (p.d - 1) / r * np.asarray(h_tilde_prime(p, r)))


# --- large-time profile H and exterior-ball profile psi ---------------------

def log_H(p: ModelParams, t: float, r: float) -> float:
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    _positive("r", r)
    if p.d >= 3:
        return log_h(p, r)
    if p.d == 2:
        num = h(p, r) if r < 1 else log_shift(r)
        return min(0.0, math.log(num) - math.log(log_shift(math.sqrt(t))))
    num_log = log_h(p, r) if r < 1 else math.log(r)
    return min(0.0, num_log - 0.5 * math.log(t))


def H(p: ModelParams, t: float, r: float) -> float:
    return math.exp(log_H(p, t, r))


def psi(d: int, R: float, t: float, r: float) -> float:
    """Boundary profile of the Dirichlet heat kernel outside the ball of radius R."""
    if t <= 0 or R <= 0:
        raise ValueError("t and R must be positive")
    if r < R:
        raise ValueError(f"psi needs r >= R, got r={r}, R={R}")
    gap = r - R
    st = math.sqrt(t)
    if d >= 3:
        return min(1.0, min(gap, R) / min(st, R))
    if d == 2:
        num = min(gap, R) * log_shift(gap / R)
        return min(1.0, num / (min(st, R) * log_shift(st / R)))
    return min(1.0, gap / st)


# --- constants ----------------------------------------------------------------

def eta0(p: ModelParams) -> float:
    b = p.beta
    return (2.0 ** (-4.0 - b / (2 + b)) * b * p.sqrt_kappa) ** (1.0 / (2 + b))


def eta1(p: ModelParams) -> float:
    return 2.0 ** (-2.0 / (2 + p.beta)) * eta0(p)


def eta1_closed_form(p: ModelParams) -> float:
    b = p.beta
    return (2.0 ** (-(12 + 7 * b) / (2 + b)) * b * p.sqrt_kappa) ** (1.0 / (2 + b))


def barrier_u(kind: str, p: ModelParams, beta_prime: float | None, r):
    """Barrier functions u1 = (2 - r^a) h_tilde, u2 = (1 + r^a) h_tilde, a = (beta - beta')/2."""
    if beta_prime is None:
        beta_prime = p.beta / 2
    if not 0 < beta_prime < p.beta:
        raise ValueError(f"beta_prime must lie in (0, beta), got {beta_prime}")
    _positive("r", r)
    if np.any(np.asarray(r) > 1):
        raise ValueError("barriers are only used on (0, 1]")
    ra = np.asarray(r, dtype=float) ** ((p.beta - beta_prime) / 2)
    if kind == "u1":
        pref = 2.0 - ra
    elif kind == "u2":
        pref = 1.0 + ra
    else:
        raise ValueError(f"unknown barrier {kind!r}")
    return _scalar(pref * np.asarray(h_tilde(p, r)))


# --- heat kernel and Green envelopes ----------------------------------------

def _norm(x):
    return float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))


def _opposite_sides(p, x, y):
    return p.d == 1 and float(np.atleast_1d(x)[0]) * float(np.atleast_1d(y)[0]) < 0


def _check_points(x, y):
    if _norm(x) == 0 or _norm(y) == 0:
        raise ValueError("points must differ from the origin")


def _pack(logv, c):
    return EnvelopeValue(value=math.exp(logv) if logv > -math.inf else 0.0, constants_used=c, log_value=logv)


def small_time_envelope(p: ModelParams, c: EnvelopeConstants, t: float, x, y) -> EnvelopeValue:
    if not 0 < t <= SMALL_TIME_MAX:
        raise ValueError(f"small-time envelope needs t in (0, 4], got {t}")
    _check_points(x, y)
    if _opposite_sides(p, x, y):
        return _pack(-math.inf, c)
    rx, ry = _norm(x), _norm(y)
    tau = t ** (1.0 / (2 + p.beta))
    lref = log_h(p, eta1(p) * tau)
    logv = min(0.0, log_h(p, rx) - lref) + min(0.0, log_h(p, ry) - lref)
    logv -= c.c_kill * t / max(rx, ry, tau) ** (2 + 2 * p.beta)
    logv += log_gaussian_q(p.d, c.c_gauss * t, x, y)
    return _pack(logv, c)


def large_time_envelope(p: ModelParams, c: EnvelopeConstants, t: float, x, y) -> EnvelopeValue:
    if t < SMALL_TIME_MAX:
        raise ValueError(f"large-time envelope needs t >= 4, got {t}")
    _check_points(x, y)
    if _opposite_sides(p, x, y):
        return _pack(-math.inf, c)
    logv = log_H(p, t, _norm(x)) + log_H(p, t, _norm(y)) + log_gaussian_q(p.d, c.c_gauss * t, x, y)
    return _pack(logv, c)


def heat_kernel_envelope(p: ModelParams, c: EnvelopeConstants, t: float, x, y) -> EnvelopeValue:
    """Small-time form for t <= 4 (both forms apply at t = 4), large-time form beyond."""
    if t <= SMALL_TIME_MAX:
        return small_time_envelope(p, c, t, x, y)
    return large_time_envelope(p, c, t, x, y)


def g0(p: ModelParams, x, y) -> float:
    rx, ry = _norm(x), _norm(y)
    dist = _norm(np.atleast_1d(np.asarray(x, float)) - np.atleast_1d(np.asarray(y, float)))
    if p.d >= 3:
        return dist ** (2 - p.d) if dist > 0 else math.inf
    if p.d == 2:
        return log_shift(min(rx, ry) / min(dist, 1.0)) if dist > 0 else math.inf
    return min(rx, ry)


def f0(p: ModelParams, x, y) -> float:
    rx, ry = _norm(x), _norm(y)
    dist = _norm(np.atleast_1d(np.asarray(x, float)) - np.atleast_1d(np.asarray(y, float)))
    inner = min(max(rx, ry), 1.0) ** (1 + p.beta)
    if p.d >= 3:
        return dist ** (2 - p.d) if dist > 0 else math.inf
    if p.d == 2:
        return log_shift(inner / dist) if dist > 0 else math.inf
    return max(dist, inner)


def green_envelope(p: ModelParams, c: EnvelopeConstants, x, y) -> EnvelopeValue:
    """Two-sided Green function profile; +inf on the diagonal when d >= 2."""
    _check_points(x, y)
    if _opposite_sides(p, x, y):
        return _pack(-math.inf, c)
    rx, ry = _norm(x), _norm(y)
    lo, hi = min(rx, ry), max(rx, ry)
    dist = _norm(np.atleast_1d(np.asarray(x, float)) - np.atleast_1d(np.asarray(y, float)))
    if lo >= 2:
        val = g0(p, x, y)
        return EnvelopeValue(val, c, math.log(val))
    fval = f0(p, x, y)
    if math.isinf(fval):
        return EnvelopeValue(math.inf, c, math.inf)
    ratio = 0.0 if dist == 0 else min(0.0, log_h(p, lo) - log_h(p, c.eta2 * dist))
    logv = ratio + math.log(fval) - c.c_kill * dist / hi ** (1 + p.beta)
    return _pack(logv, c)


def lemma73_const(a: float, b: float, beta: float) -> float:
    """Constant c with sup_t(-a r^2/t + b t^{-beta/(2+beta)}) = -a/(c r^beta) + b/(c^{beta/(2+beta)} r^beta).

    The supremum is attained at t = c r^{2+beta}; c is the root of the
    first-order condition at r = 1.
    """
    if not (a > 0 and b > 0 and beta > 0):
        raise ValueError("a, b and beta must be positive")
    k = beta / (2 + beta)

    def foc(logt):
        return a - b * k * math.exp((1 - k) * logt)

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if foc(lo) > 0 > foc(hi):
            break
        if foc(lo) <= 0:
            lo *= 2
        if foc(hi) >= 0:
            hi *= 2
    else:
        raise RuntimeError("could not bracket the stationary point")
    return math.exp(optimize.brentq(foc, lo, hi, xtol=1e-14, rtol=1e-15))


__all__ = [
    "E_MINUS_1",
    "EnvelopeConstants",
    "EnvelopeValue",
    "ModelParams",
    "H",
    "barrier_u",
    "eta0",
    "eta1",
    "eta1_closed_form",
    "f0",
    "g0",
    "green_envelope",
    "h",
    "h_tilde",
    "h_tilde_logderiv",
    "h_tilde_prime",
    "h_tilde_second",
    "heat_kernel_envelope",
    "large_time_envelope",
    "lemma73_const",
    "log_H",
    "log_h",
    "log_h_tilde",
    "psi",
    "small_time_envelope",
]
