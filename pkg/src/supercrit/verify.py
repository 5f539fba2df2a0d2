"""Verification harness: constant fitting, decay regressions and counterexample experiments.

A two-sided estimate ``numeric ~ envelope`` is checked as a bounded spread
of ``log(numeric / envelope)`` over a grid. The constants in the envelope are
fit by minimising that spread.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import envelopes as env
from . import pde_radial as pde
from .envelopes import EnvelopeConstants, ModelParams
from .fk_montecarlo import McConfig, green_mc, heat_kernel
from .potentials import Potential, classify
from .reports import RatioReport

log = logging.getLogger(__name__)

ANGLES = ("aligned", "antipodal", "sampled")
KINDS = ("small_time", "large_time", "green")
FIT_SLOTS = {
    "small_time": ("c_gauss", "c_kill"),
    "large_time": ("c_gauss",),
    "green": ("c_kill", "eta2"),
}


@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid over (t, x, y).

    ``paired`` zips ``radii_x`` with ``radii_y`` instead of taking the
    product. Points are placed on the first axis; ``antipodal`` puts y on the
    opposite ray and ``sampled`` draws ``n_angles`` directions for y from
    ``seed``. ``same_sign`` is required for d = 1 two-sided claims.
    """

    t_values: tuple = ()
    radii_x: tuple = ()
    radii_y: tuple = ()
    angle: str = "aligned"
    n_angles: int = 1
    potential: Potential | None = field(default=None, compare=False)
    paired: bool = False
    same_sign: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("t_values", "radii_x", "radii_y"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if any(not v > 0 for v in vals):
                raise ValueError(f"{name} must be positive")
        if not self.radii_x or not self.radii_y:
            raise ValueError("grid needs at least one x and one y radius")
        if self.paired and len(self.radii_x) != len(self.radii_y):
            raise ValueError("paired grids need equally many x and y radii")
        if self.angle not in ANGLES:
            raise ValueError(f"unknown angle policy {self.angle!r}")
        if self.angle == "sampled" and self.n_angles < 1:
            raise ValueError("sampled angle policy needs n_angles >= 1")

    def radius_pairs(self):
        if self.paired:
            return list(zip(self.radii_x, self.radii_y))
        return list(itertools.product(self.radii_x, self.radii_y))

    def pairs(self, d: int):
        """(x, y) points as arrays of length d."""
        if d == 1 and self.angle != "aligned" and self.same_sign:
            raise ValueError("d = 1 same-sign grids only allow the aligned policy")
        rng = np.random.default_rng(self.seed)
        e1 = np.zeros(d)
        e1[0] = 1.0
        out = []
        for rx, ry in self.radius_pairs():
            x = rx * e1
            if self.angle == "aligned":
                out.append((x, ry * e1))
            elif self.angle == "antipodal":
                out.append((x, -ry * e1))
            else:
                for _ in range(self.n_angles):
                    u = rng.standard_normal(d)
                    out.append((x, ry * u / np.linalg.norm(u)))
        return out

    def points(self, d: int):
        """(t, x, y) triples; requires t_values."""
        if not self.t_values:
            raise ValueError("grid has no t_values")
        return [(t, x, y) for t in self.t_values for x, y in self.pairs(d)]


# --- numeric sources ---------------------------------------------------------

def _kernel_values_pde(V: Potential, pts):
    """d = 1 kernels from one grid solve per (t, y)."""
    if V.d != 1:
        raise ValueError("the PDE kernel source is only available for d = 1")
    far = max(max(abs(x[0]), abs(y[0])) for _, x, y in pts)
    out = []
    cache = {}
    for t, x, y in pts:
        if x[0] * y[0] < 0:
            out.append(0.0)
            continue
        sx, sy = abs(x[0]), abs(y[0])
        key = (t, sy)
        if key not in cache:
            g = pde.kernel_grid_1d(V, t, (far,))
            cache[key] = pde.kernel_profile_1d(V, t, sy, g)
        out.append(float(cache[key](sx)))
    return out


def numeric_values(kind: str, V: Potential, grid: GridSpec, source: str = "pde", cfg: McConfig | None = None):
    """Numeric kernel or Green values at the grid points, with the points."""
    cfg = cfg or McConfig()
    if kind == "green":
        pts = [(None, x, y) for x, y in grid.pairs(V.d)]
        if source != "mc":
            raise ValueError("Green values come from the mc source")
        vals = [green_mc(V, x, y, replace(cfg, seed=cfg.seed + i)).mean for i, (_, x, y) in enumerate(pts)]
        return pts, vals
    pts = grid.points(V.d)
    if source == "pde":
        return pts, _kernel_values_pde(V, pts)
    if source == "mc":
        return pts, [heat_kernel(V, t, x, y, replace(cfg, seed=cfg.seed + i)).mean
                     for i, (t, x, y) in enumerate(pts)]
    raise ValueError(f"unknown source {source!r}")


# --- fitting -----------------------------------------------------------------

def _log_envelope(kind, p, c, t, x, y):
    if kind == "small_time":
        return env.small_time_envelope(p, c, t, x, y).log_value
    if kind == "large_time":
        return env.large_time_envelope(p, c, t, x, y).log_value
    return env.green_envelope(p, c, x, y).log_value


def _check_regime(kind, p, pts):
    for t, x, y in pts:
        if kind == "small_time" and not 0 < t <= env.SMALL_TIME_MAX:
            raise ValueError(f"t={t} is outside the small-time regime")
        if kind == "large_time" and t < env.SMALL_TIME_MAX:
            raise ValueError(f"t={t} is outside the large-time regime")
        if p.d == 1 and float(x[0]) * float(y[0]) < 0:
            raise ValueError("d = 1 two-sided estimates need same-sign points")


def _spread(logs):
    logs = np.asarray(logs)
    if not np.all(np.isfinite(logs)):
        return math.inf
    return float(logs.max() - logs.min()) if logs.size else 0.0


def _minimise_spread(objective, n_slots, lo=-4.0, hi=4.0, coarse=33, tol=1e-4):
    """Coarse log-grid scan followed by coordinate search with halving steps."""
    axis = np.linspace(lo, hi, coarse)
    best, best_val = np.zeros(n_slots), objective(np.zeros(n_slots))
    for cand in itertools.product(axis, repeat=n_slots):
        val = objective(np.array(cand))
        if val < best_val:
            best, best_val = np.array(cand), val
    step = axis[1] - axis[0]
    while step > tol:
        improved = False
        for i in range(n_slots):
            for sgn in (1.0, -1.0):
                cand = best.copy()
                cand[i] += sgn * step
                val = objective(cand)
                if val < best_val - 1e-15:
                    best, best_val, improved = cand, val, True
        if not improved:
            step /= 2
    return best, best_val


def fit_report(kind: str, p: ModelParams, pts, numeric, slots=None, extras=None):
    """Fit the envelope constants in ``slots`` to given numeric values."""
    if kind not in KINDS:
        raise ValueError(f"unknown envelope kind {kind!r}")
    if kind != "green":
        _check_regime(kind, p, pts)
    slots = FIT_SLOTS[kind] if slots is None else tuple(slots)
    lognum = np.array([math.log(v) if v > 0 else -math.inf for v in numeric])

    def consts(logc):
        return EnvelopeConstants(**{s: float(math.exp(v)) for s, v in zip(slots, logc)})

    def logs_for(c):
        return lognum - np.array([_log_envelope(kind, p, c, t, x, y) for t, x, y in pts])

    if np.all(np.isfinite(lognum)):
        logc, _ = _minimise_spread(lambda lc: _spread(logs_for(consts(lc))), len(slots))
    else:
        logc = np.zeros(len(slots))
    c = consts(logc)
    logs = logs_for(c)
    entries = []
    for (t, x, y), v, lr in zip(pts, numeric, logs):
        point = (t, tuple(np.atleast_1d(x)), tuple(np.atleast_1d(y))) if t is not None else \
            (tuple(np.atleast_1d(x)), tuple(np.atleast_1d(y)))
        le = _log_envelope(kind, p, c, t, x, y)
        entries.append((point, float(v), math.exp(le) if le > -math.inf else 0.0, float(lr)))
    info = {"kind": kind, "slots": list(slots)}
    if kind == "small_time" and any(t == env.SMALL_TIME_MAX for t, _, _ in pts):
        info["overlap_t"] = env.SMALL_TIME_MAX
    info.update(extras or {})
    return c, RatioReport.from_entries(entries, c, info)


def fit_constants(kind: str, grid: GridSpec, source: str = "pde", cfg: McConfig | None = None,
                  slots=None) -> tuple[EnvelopeConstants, RatioReport]:
    """Fit (c_gauss, c_kill, eta2) so that numeric / envelope has the smallest log spread.

    ``source`` is ``"pde"`` (d = 1 kernels) or ``"mc"``. Only the slots that
    enter the chosen envelope are fitted; the others stay at 1.
    """
    V = grid.potential
    if V is None:
        raise ValueError("grid needs a potential")
    if kind not in KINDS:
        raise ValueError(f"unknown envelope kind {kind!r}")
    pts, numeric = numeric_values(kind, V, grid, source, cfg)
    return fit_report(kind, V.params, pts, numeric, slots, {"source": source})


# --- regressions ---------------------------------------------------------------

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    x: tuple
    y: tuple

    def __float__(self):
        return self.slope


def _lstsq(xs, ys) -> SlopeFit:
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if not np.all(np.isfinite(ys)):
        raise ValueError("regression data contain non-finite values")
    slope, intercept = np.polyfit(xs, ys, 1)
    return SlopeFit(float(slope), float(intercept), tuple(xs), tuple(ys))


def _check_radii(radii, bound=None):
    radii = np.asarray(radii, dtype=float)
    if radii.size < 3:
        raise ValueError("regression needs at least 3 radii")
    if np.any(radii <= 0) or (bound is not None and np.any(radii >= bound)):
        raise ValueError(f"radii must lie in (0, {bound})")
    return radii


def boundary_scale(p: ModelParams, t: float) -> float:
    """eta0 t^{1/(2+beta)}, the radius below which survival follows h."""
    return env.eta0(p) * t ** (1.0 / (2 + p.beta))


def _survival_profile(V: Potential, t: float, grid: pde.RadialGrid | None = None):
    g = grid if grid is not None else pde.default_grid(V, t)
    return pde.solve_survival(V, V.params, g, t)


def decay_slope(V: Potential, t: float, radii, source: str = "pde_survival",
                grid: pde.RadialGrid | None = None) -> SlopeFit:
    """Slope of log P_r(lifetime > t) against r^{-beta}; about -sqrt(kappa)/beta in the class."""
    if source != "pde_survival":
        raise ValueError(f"unknown source {source!r}")
    p = V.params
    radii = _check_radii(radii, boundary_scale(p, t))
    u = _survival_profile(V, t, grid)(radii)
    return _lstsq(radii ** -p.beta, np.log(u))


def counterexample_exponent(V: Potential, t: float, radii, experiment: str = "auto", R: float = 0.5,
                            grid: pde.RadialGrid | None = None) -> SlopeFit:
    """Power of r left over after dividing a killed probability by its h-profile.

    ``"survival"`` regresses log(u(t, r)/h(r)) on log r; a positive slope is
    the extra |x|^{a2} factor that breaks the lower estimate. ``"exit"``
    regresses log(P_r(exit B(0,R) before death)/h_tilde(r)) on log r, where
    a negative slope shows the |x|^{-a1} factor. ``"auto"`` picks ``exit``
    for the critical potential with sign -1 and ``survival`` otherwise.
    """
    p = V.params
    if experiment == "auto":
        experiment = "exit" if (V.form == "critical" and V.sign < 0) else "survival"
    if experiment == "survival":
        radii = _check_radii(radii, boundary_scale(p, t))
        u = _survival_profile(V, t, grid)(radii)
        return _lstsq(np.log(radii), np.log(u) - np.asarray(env.log_h(p, radii)))
    if experiment == "exit":
        radii = _check_radii(radii, R)
        g = grid if grid is not None else pde.RadialGrid.build(pde.inner_cutoff(p), R, 1.0, per_decade=400)
        w = pde.solve_exit_probability(V, g)(radii)
        return _lstsq(np.log(radii), np.log(w) - np.asarray(env.log_h_tilde(p, radii)))
    raise ValueError(f"unknown experiment {experiment!r}")


# --- survival sandwich --------------------------------------------------------

def survival_sandwich(V: Potential, points, t0: float = 1.0, steps: int = 1000) -> RatioReport:
    """Survival against h(r)/h(eta0 t^{1/(2+beta)}) from above, exit-capped probability from below.

    For each (t, r) the entry is the ratio of u(t, r) = P_r(lifetime > t) to
    h(r)/h(eta0 t^{1/(2+beta)}), which must stay bounded above. The lower
    side uses rho = eta0 (t/4)^{1/(2+beta)} and the ratio of
    P_r(exit B(0, rho) before lifetime and t/3) to h(r)/h(rho), which must
    stay away from 0. ``extras`` carries the lower ratios and the largest t
    at which they stay positive.
    """
    if not classify(V, "Kloc"):
        raise ValueError("survival_sandwich needs a potential in Kloc(beta, kappa)")
    p = V.params
    points = [(float(t), float(r)) for t, r in points]
    if not points:
        raise ValueError("sandwich needs at least one (t, r) point")
    entries, lower = [], []
    profiles = {}
    for t, r in points:
        if t > t0:
            raise ValueError(f"t={t} exceeds t0={t0}")
        scale = boundary_scale(p, t)
        if not 0 < r < scale:
            raise ValueError(f"r={r} must lie in (0, eta0 t^(1/(2+beta)))")
        if t not in profiles:
            profiles[t] = _survival_profile(V, t, pde.default_grid(V, t, steps=steps))
        u = float(profiles[t](r))
        log_env = env.log_h(p, r) - env.log_h(p, scale)
        entries.append(((t, r), u, math.exp(log_env), math.log(u) - log_env if u > 0 else -math.inf))
        rho = boundary_scale(p, t / 4)
        if r < rho:
            g = pde.RadialGrid.build(pde.inner_cutoff(p), rho, t / 3 / steps)
            w = float(pde.solve_exit_capped(V, g, t / 3)(r))
            lower.append(((t, r), w, w / math.exp(env.log_h(p, r) - env.log_h(p, rho))))
        else:
            lower.append(((t, r), math.nan, math.nan))
    report = RatioReport.from_entries(entries, None)
    good_t = [t for t in sorted(set(t for t, _ in points))
              if all(lr[2] > 0 for lr in lower if lr[0][0] == t and math.isfinite(lr[2]))]
    lows = [lr[2] for lr in lower if math.isfinite(lr[2])]
    report.extras = {
        "upper_max": float(report.log_ratios.max()) if report.entries else 0.0,
        "lower_ratios": [{"point": pt, "exit_capped": w, "ratio": lr} for pt, w, lr in lower],
        "lower_min": min(lows) if lows else math.nan,
        "t0": max(good_t) if good_t else 0.0,
    }
    if lows and not min(lows) > 0:
        bad = next(lr[0] for lr in lower if not lr[2] > 0)
        report.verdict, report.violation = "violated", bad
    return report


__all__ = [
    "GridSpec",
    "RatioReport",
    "SlopeFit",
    "boundary_scale",
    "counterexample_exponent",
    "decay_slope",
    "fit_constants",
    "fit_report",
    "numeric_values",
    "survival_sandwich",
]
