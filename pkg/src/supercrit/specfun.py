"""Special functions used by the envelopes.

``bessel_k`` and ``log_bessel_k`` evaluate the modified Bessel function of the
second kind for real order through the exponentially scaled AMOS routine
(``scipy.special.kve``), so the log-scale variant never underflows.
``bessel_k_quad`` integrates the representation

.. math::
    K_\\nu(x) = \\int_0^\\infty e^{-x\\cosh t}\\cosh(\\nu t)\\,dt

directly and is kept as an independent oracle.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

E_MINUS_1 = math.e - 1.0


def _check_order(nu):
    if not np.all(np.isfinite(nu)):
        raise ValueError(f"Bessel order must be finite, got {nu!r}")


def _check_arg(x):
    if np.any(np.asarray(x) <= 0) or np.any(np.isnan(x)):
        raise ValueError(f"Bessel argument must be positive, got {x!r}")


def log_bessel_k(nu, x):
    """Natural logarithm of K_nu(x) for real ``nu`` and ``x > 0``."""
    _check_order(nu)
    _check_arg(x)
    x = np.asarray(x, dtype=float)
    out = np.log(special.kve(nu, x)) - x
    return out if out.ndim else float(out)


def bessel_k(nu, x):
    """Modified Bessel function of the second kind K_nu(x).

    Values whose magnitude falls below the double-precision range underflow
    to 0; use :func:`log_bessel_k` in that regime.
    """
    _check_order(nu)
    _check_arg(x)
    out = special.kv(nu, np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def bessel_k_ratio(nu_num, nu_den, x):
    """K_{nu_num}(x) / K_{nu_den}(x), free of under/overflow."""
    _check_order(nu_num)
    _check_order(nu_den)
    _check_arg(x)
    x = np.asarray(x, dtype=float)
    out = special.kve(nu_num, x) / special.kve(nu_den, x)
    return out if out.ndim else float(out)


def bessel_k_quad(nu: float, x: float) -> float:
    """K_nu(x) by adaptive quadrature of the cosh integral representation."""
    _check_order(nu)
    _check_arg(x)
    nu = abs(float(nu))
    # e^{-x cosh t} cosh(nu t) is negligible once x cosh t - nu t - x > 800
    upper = 1.0
    while x * math.cosh(upper) - nu * upper - x < 800.0:
        upper *= 1.5
    # scaled by e^{x} so that large arguments keep full relative accuracy
    f = lambda t: math.exp(-x * (math.cosh(t) - 1.0) + nu * t) * 0.5 * (1.0 + math.exp(-2.0 * nu * t))
    val, _ = integrate.quad(f, 0.0, upper, epsabs=0.0, epsrel=1e-13, limit=400)
    return val * math.exp(-x)


def gaussian_q(d: int, t: float, x, y) -> float:
    """Gaussian heat kernel (4 pi t)^{-d/2} exp(-|x-y|^2 / (4t)) of the Laplacian."""
    return math.exp(log_gaussian_q(d, t, x, y))


def log_gaussian_q(d: int, t: float, x, y) -> float:
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    dist2 = float(np.sum((np.atleast_1d(np.asarray(x, float)) - np.atleast_1d(np.asarray(y, float))) ** 2))
    return -0.5 * d * math.log(4.0 * math.pi * t) - dist2 / (4.0 * t)


def gaussian_q_dist(d: int, t, dist):
    """Vectorised Gaussian kernel as a function of the separation |x-y|."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    return (4.0 * np.pi * t) ** (-0.5 * d) * np.exp(-np.square(dist) / (4.0 * t))


def log_shift(r):
    """Shifted logarithm log(e - 1 + r), positive for r >= 0."""
    if np.any(np.asarray(r) < 0):
        raise ValueError(f"log_shift needs r >= 0, got {r!r}")
    out = np.log(E_MINUS_1 + np.asarray(r, dtype=float))
    return out if np.ndim(out) else float(out)
