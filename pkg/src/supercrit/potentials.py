"""Radial killing potentials, class membership checks and the generator Delta - V."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate

from .envelopes import ModelParams, h_tilde_logderiv

FORMS = ("canonical", "perturbed", "critical", "custom")
CLASS_TAGS = ("Kloc_ge", "Kloc_le", "Kloc", "K", "critical_upper", "critical_lower")


@dataclass(frozen=True)
class Potential:
    """Radial potential V(|x|).

    ``C3``/``gamma`` describe the tail C3 r^{-2-gamma} used on r > 1 by the
    built-in forms; they default to the canonical tail (kappa, 2 beta).
    ``singular`` records whether V fails to be integrable at the origin, which
    is what makes paths through 0 die.
    """

    form: str
    params: ModelParams
    C: float = 0.0
    theta: float = 0.0
    sign: int = 1
    C3: float | None = None
    gamma: float | None = None
    func: Callable | None = field(default=None, compare=False)
    singular: bool = True

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown potential form {self.form!r}")
        p = self.params
        if self.C3 is None:
            object.__setattr__(self, "C3", p.kappa)
        if self.gamma is None:
            object.__setattr__(self, "gamma", 2 * p.beta)
        if self.C3 < 0 or self.gamma <= 0:
            raise ValueError("tail needs C3 >= 0 and gamma > 0")
        if self.form == "custom" and self.func is None:
            raise ValueError("custom potentials need a radial function")
        # canonical with its own tail is one power law on all of (0, inf)
        pure = self.form == "canonical" and self.C3 == p.kappa and self.gamma == 2 * p.beta
        object.__setattr__(self, "_pure_power", pure)

    @property
    def d(self) -> int:
        return self.params.d

    def _inner(self, r):
        p = self.params
        base = p.kappa * r ** (-2.0 - 2.0 * p.beta)
        if self.form == "canonical":
            return base
        if self.form == "perturbed":
            coef = np.maximum(p.kappa + self.sign * self.C * r**self.theta, 0.0)
            return coef * r ** (-2.0 - 2.0 * p.beta)
        return base + self.sign * self.C * r ** (-2.0 - p.beta)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.form == "custom":
            out = np.asarray(self.func(r), dtype=float) * np.ones_like(r)
        elif self._pure_power:
            with np.errstate(divide="ignore", over="ignore"):
                out = self.params.kappa * r ** (-2.0 - 2.0 * self.params.beta)
        else:
            with np.errstate(divide="ignore", over="ignore"):
                # keep 0-d arrays: scalar and array pow can differ by an ulp
                inner = self._inner(np.asarray(np.minimum(r, 1.0)))
                tail = self.C3 * np.asarray(np.maximum(r, 1.0)) ** (-2.0 - self.gamma)
            out = np.where(r <= 1.0, inner, tail)
        return out if out.ndim else float(out)

    eval = __call__

    @property
    def is_zero(self) -> bool:
        return self.form == "custom" and getattr(self.func, "_zero", False)

    def to_config(self) -> dict:
        if self.form == "custom":
            raise ValueError("custom potentials cannot be serialised")
        return {
            "form": self.form,
            "d": self.params.d,
            "beta": self.params.beta,
            "kappa": self.params.kappa,
            "C": self.C,
            "theta": self.theta,
            "sign": self.sign,
            "C3": self.C3,
            "gamma": self.gamma,
        }

    @classmethod
    def from_config(cls, block: dict, params: ModelParams | None = None) -> "Potential":
        """Build a potential from a key-value block (values may be strings)."""
        if params is None:
            params = ModelParams(int(block.get("d", 3)), float(block["beta"]), float(block["kappa"]))
        form = str(block.get("form", "canonical"))
        if form == "zero":
            return zero(params)
        if form == "constant":
            return constant(params, float(block["lam"]))
        C = float(block.get("C", 0.0))
        sign = int(float(block.get("sign", 1)))
        tail = {k: float(block[k]) for k in ("C3", "gamma") if k in block}
        if form == "canonical":
            return replace(canonical(params), **tail)
        if form == "perturbed":
            return replace(perturbed(params, C, float(block["theta"]), sign), **tail)
        if form == "critical":
            return replace(critical(params, C, sign), **tail)
        raise ValueError(f"cannot build potential of form {form!r} from config")


def canonical(p: ModelParams) -> Potential:
    """kappa r^{-2-2 beta} everywhere."""
    return Potential("canonical", p)


def perturbed(p: ModelParams, C: float, theta: float, sign: int = 1) -> Potential:
    """(kappa + sign C r^theta)_+ r^{-2-2 beta} on (0, 1], canonical tail."""
    if C <= 0:
        raise ValueError("C must be positive")
    if theta <= p.beta:
        raise ValueError(f"theta must exceed beta={p.beta}, got {theta}")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    return Potential("perturbed", p, C=C, theta=theta, sign=sign)


def critical(p: ModelParams, C: float, sign: int = 1) -> Potential:
    """kappa r^{-2-2 beta} + sign C r^{-2-beta} on (0, 1], canonical tail."""
    if C <= 0:
        raise ValueError("C must be positive")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    if sign == -1 and C > p.kappa:
        raise ValueError("sign=-1 needs C <= kappa to keep V >= 0 on (0, 1]")
    return Potential("critical", p, C=C, sign=sign)


def _origin_divergent(func, d) -> bool:
    def mass(eps):
        val, _ = integrate.quad(lambda r: r ** (d - 1) * float(func(np.asarray(r))), eps, 1.0, limit=200)
        return val

    m2, m6 = mass(1e-2), mass(1e-6)
    return m6 > 100.0 * max(m2, 1e-300) and m6 > 1.0


def custom(p: ModelParams, func: Callable, singular: bool, check: bool = True) -> Potential:
    """User supplied radial potential with a declared integrability flag.

    The flag is spot-checked by quadrature of r^{d-1} V(r) near the origin.
    """
    vals = np.asarray(func(np.geomspace(1e-4, 10.0, 64)), dtype=float)
    if np.any(vals < 0):
        raise ValueError("potential must be nonnegative")
    if check and _origin_divergent(func, p.d) != singular:
        raise ValueError(f"declared singular={singular} contradicts the quadrature check")
    return Potential("custom", p, func=func, singular=singular)


def zero(p: ModelParams) -> Potential:
    f = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    f._zero = True
    return Potential("custom", p, func=f, singular=False)


def constant(p: ModelParams, lam: float) -> Potential:
    if lam < 0:
        raise ValueError("constant potential must be nonnegative")
    return custom(p, lambda r: np.full_like(np.asarray(r, dtype=float), lam), singular=False, check=False)


# --- class membership --------------------------------------------------------

@dataclass
class ClassReport:
    tag: str
    member: bool
    constants: dict
    worst_r: float | None = None
    note: str = ""

    def __bool__(self):
        return self.member


def _default_inner_grid():
    return np.geomspace(1e-4, 1.0, 1000)


def _default_outer_grid():
    return np.geomspace(1.0, 1e4, 400)[1:]


def _sup_is_interior(vals, r, at_small_end=True):
    """True if sup(vals) is not driven by the extreme decade of the grid."""
    if at_small_end:
        keep = r >= 10 * r.min()
    else:
        keep = r <= r.max() / 10
    full, core = np.max(vals), np.max(vals[keep])
    return full <= core + 1e-9 * max(abs(core), 1.0)


def _beta_prime_candidates(beta):
    fr = np.concatenate([np.linspace(0.05, 0.95, 19), 1.0 - np.logspace(-2, -4, 5)])
    return beta * fr


def _check_side(V: Potential, r, sign):
    """Search beta' with V <= or >= kappa r^{-2-2b} -/+ C r^{-2-b'} on the grid."""
    p = V.params
    excess = sign * (V(r) - p.kappa * r ** (-2.0 - 2.0 * p.beta))
    worst = None
    for bp in _beta_prime_candidates(p.beta):
        need = excess * r ** (2.0 + bp)
        # a nonpositive sup is witnessed by C = 0 whatever the grid
        if need.max() <= 0 or _sup_is_interior(need, r):
            return True, {"beta_prime": float(bp), "C": float(max(need.max(), 0.0))}, None
        worst = float(r[np.argmax(need)])
    return False, {}, worst


def _check_tail(V: Potential, r):
    vals = V(r)
    gammas = np.unique(np.concatenate([np.linspace(0.05, 4 * V.params.beta, 80), [2 * V.params.beta, V.gamma]]))
    worst = None
    for g in gammas[::-1]:
        need = vals * r ** (2.0 + g)
        if _sup_is_interior(need, r, at_small_end=False):
            return True, {"gamma": float(g), "C3": float(need.max())}, None
        worst = float(r[np.argmax(need)])
    return False, {}, worst


def classify(V: Potential, tag: str, grid=None) -> ClassReport:
    """Grid check of a class condition.

    ``grid`` is an array of radii in (0, 1] (radii beyond 1 are used for the
    tail condition of ``K``) or an object with a ``radii_x`` attribute.
    Membership requires a witnessing constant whose value is not set by the
    innermost decade of the grid, i.e. one that survives refinement toward 0.
    """
    if tag not in CLASS_TAGS:
        raise ValueError(f"unknown class tag {tag!r}")
    if grid is not None and hasattr(grid, "radii_x"):
        grid = grid.radii_x
    radii = np.sort(np.asarray(grid if grid is not None else _default_inner_grid(), dtype=float))
    inner = radii[radii <= 1.0]
    outer = radii[radii > 1.0]
    if inner.size < 100:
        raise ValueError("classification grid needs at least 100 radii in (0, 1]")
    if outer.size == 0:
        outer = _default_outer_grid()
    if not V.singular:
        return ClassReport(tag, False, {}, None, "potential is integrable at the origin")
    p = V.params

    if tag in ("critical_upper", "critical_lower"):
        s = -1 if tag == "critical_upper" else 1
        margin = s * (V(inner) - p.kappa * inner ** (-2.0 - 2.0 * p.beta)) * inner ** (2.0 + p.beta)
        ok = bool(margin.min() > 0)
        return ClassReport(tag, ok, {"C": float(margin.min())} if ok else {}, None if ok else float(inner[np.argmin(margin)]))

    consts: dict = {}
    parts = {"Kloc_ge": [1], "Kloc_le": [-1], "Kloc": [1, -1], "K": [1, -1]}[tag]
    for side in parts:
        ok, c, worst = _check_side(V, inner, -side)
        if not ok:
            return ClassReport(tag, False, consts, worst, f"{'lower' if side == 1 else 'upper'} condition fails")
        key = "C1" if side == 1 else "C2"
        consts[key] = c["C"]
        consts[f"beta_prime_{key}"] = c["beta_prime"]
    if tag == "K":
        ok, c, worst = _check_tail(V, outer)
        if not ok:
            return ClassReport(tag, False, consts, worst, "tail condition fails")
        consts.update(c)
    return ClassReport(tag, True, consts)


def class_tags(V: Potential, grid=None) -> list[str]:
    return [t for t in CLASS_TAGS if classify(V, t, grid).member]


# --- generator ----------------------------------------------------------------

@dataclass(frozen=True)
class RadialFunction:
    """f(r) with optional analytic first and second derivatives."""

    value: Callable
    d1: Callable | None = None
    d2: Callable | None = None

    def derivs(self, r: float, rel_step: float = 1e-4):
        f0 = float(self.value(r))
        step = rel_step * r
        if self.d1 is not None:
            f1 = float(self.d1(r))
        else:
            f1 = (float(self.value(r + step)) - float(self.value(r - step))) / (2 * step)
        if self.d2 is not None:
            f2 = float(self.d2(r))
        else:
            f2 = (float(self.value(r + step)) - 2 * f0 + float(self.value(r - step))) / step**2
        return f0, f1, f2


def apply_generator(V: Potential, f: RadialFunction, r: float) -> float:
    """f'' + (d-1)/r f' - V f at radius r."""
    if r <= 0:
        raise ValueError("r must be positive")
    f0, f1, f2 = f.derivs(r)
    return f2 + (V.d - 1) / r * f1 - float(V(r)) * f0


def generator_over_htilde(V: Potential, g, g1, g2, r):
    """L^V(g h_tilde) / h_tilde for a smooth multiplier g with derivatives g1, g2.

    Uses h_tilde'' + (d-1)/r h_tilde' = kappa r^{-2-2beta} h_tilde, so only the
    log-derivative of h_tilde is needed and nothing underflows near 0.
    """
    p = V.params
    r = np.asarray(r, dtype=float)
    ell = np.asarray(h_tilde_logderiv(p, r))
    out = g2 + 2 * g1 * ell + (p.d - 1) / r * g1 + g * (p.kappa * r ** (-2.0 - 2.0 * p.beta) - V(r))
    return out if out.ndim else float(out)


def power_multiplier(a: float):
    """(g, g', g'') for g(r) = r^a."""
    return (
        lambda r: r**a,
        lambda r: a * r ** (a - 1),
        lambda r: a * (a - 1) * r ** (a - 2),
    )


def barrier_multiplier(kind: str, p: ModelParams, beta_prime: float | None = None):
    """(g, g', g'') with u = g h_tilde for the barriers u1, u2."""
    bp = p.beta / 2 if beta_prime is None else beta_prime
    a = (p.beta - bp) / 2
    s = -1.0 if kind == "u1" else 1.0
    c = 2.0 if kind == "u1" else 1.0
    return (
        lambda r: c + s * r**a,
        lambda r: s * a * r ** (a - 1),
        lambda r: s * a * (a - 1) * r ** (a - 2),
    )


def htilde_power_function(p: ModelParams, a: float) -> RadialFunction:
    """r^a h_tilde(r) with analytic derivatives."""
    from .envelopes import h_tilde, h_tilde_prime, h_tilde_second

    return RadialFunction(
        value=lambda r: r**a * h_tilde(p, r),
        d1=lambda r: a * r ** (a - 1) * h_tilde(p, r) + r**a * h_tilde_prime(p, r),
        d2=lambda r: a * (a - 1) * r ** (a - 2) * h_tilde(p, r)
        + 2 * a * r ** (a - 1) * h_tilde_prime(p, r)
        + r**a * h_tilde_second(p, r),
    )


def barrier_function(kind: str, p: ModelParams, beta_prime: float | None = None) -> RadialFunction:
    from .envelopes import h_tilde, h_tilde_prime, h_tilde_second

    g, g1, g2 = barrier_multiplier(kind, p, beta_prime)
    return RadialFunction(
        value=lambda r: g(r) * h_tilde(p, r),
        d1=lambda r: g1(r) * h_tilde(p, r) + g(r) * h_tilde_prime(p, r),
        d2=lambda r: g2(r) * h_tilde(p, r) + 2 * g1(r) * h_tilde_prime(p, r) + g(r) * h_tilde_second(p, r),
    )


def _largest_radius(sign_ok, candidates, inner_frac=0.02, n=200):
    for R in candidates:
        r = np.geomspace(inner_frac * R, R, n)
        if np.all(sign_ok(r)):
            return float(R)
    return 0.0


def barrier_radii(V: Potential, beta_prime: float | None = None) -> tuple[float, float]:
    """Empirical (R1, R2): L^V u1 <= 0 on [0.02 R1, R1] and L^V u2 >= 0 on [0.02 R2, R2]."""
    p = V.params
    candidates = np.geomspace(1.0, 1e-3, 121)
    g = barrier_multiplier("u1", p, beta_prime)
    r1 = _largest_radius(lambda r: generator_over_htilde(V, g[0](r), g[1](r), g[2](r), r) <= 0, candidates)
    g = barrier_multiplier("u2", p, beta_prime)
    r2 = _largest_radius(lambda r: generator_over_htilde(V, g[0](r), g[1](r), g[2](r), r) >= 0, candidates)
    return r1, r2


def counterexample_power(V: Potential, which: int, r_range=(1e-3, 0.5)) -> float:
    """Smallest a on a grid with the critical barrier sign on ``r_range``.

    which=1: L^V(r^{-a} h_tilde) >= 0 (upper-critical potentials);
    which=2: L^V(r^{a} h_tilde) <= 0 (lower-critical potentials).
    Returns nan when no grid value works.
    """
    r = np.geomspace(*r_range, 300)
    for a in np.linspace(0.01, 10.0, 1000):
        e = -a if which == 1 else a
        g, g1, g2 = power_multiplier(e)
        val = generator_over_htilde(V, g(r), g1(r), g2(r), r)
        if (which == 1 and np.all(val >= 0)) or (which == 2 and np.all(val <= 0)):
            return float(a)
    return math.nan
