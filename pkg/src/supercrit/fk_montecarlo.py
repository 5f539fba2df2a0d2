"""Feynman-Kac Monte Carlo for Brownian motion with generator Delta killed at rate V.

Paths are simulated in batches. Batch ``b`` draws from a generator seeded by
``SeedSequence(seed, spawn_key=(b,))`` and batch statistics are merged in
batch-index order, so estimates do not depend on how many threads run the
batches.

Time steps adapt to the killing rate: a step from radius r never exceeds
``substep_theta / V(r)`` (which is ``substep_theta * r^{2+2 beta} / kappa`` for
the canonical potential), so each step contributes a bounded amount to the
trapezoid estimate of the time integral of V.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .potentials import Potential
from .specfun import gaussian_q, log_gaussian_q

log = logging.getLogger(__name__)

UNDERFLOW_LOG = -745.0


@dataclass(frozen=True)
class McConfig:
    paths: int = 10_000
    dt: float = 1e-3
    substep_theta: float = 0.1
    weight_floor: float = UNDERFLOW_LOG
    seed: int = 0
    r_min: float = 1e-4
    batch_size: int = 4096
    threads: int = 1
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.substep_theta > 0:
            raise ValueError("substep_theta must be positive")
        if self.weight_floor > 0:
            raise ValueError("weight_floor is a log-weight and must be <= 0")
        if self.batch_size < 1 or self.threads < 1:
            raise ValueError("batch_size and threads must be >= 1")

    def to_config(self) -> dict:
        return asdict(self)

    @classmethod
    def from_config(cls, block: dict) -> "McConfig":
        kinds = {"paths": int, "seed": int, "batch_size": int, "threads": int, "max_steps": int}
        kw = {}
        for key, val in block.items():
            if key in cls.__dataclass_fields__:
                kw[key] = kinds.get(key, float)(float(val)) if key in kinds else float(val)
        return cls(**kw)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int
    zero_weight_frac: float

    @property
    def low_information(self) -> bool:
        """Almost every path was killed; prefer the PDE solver here."""
        return self.zero_weight_frac > 0.999

    def scaled(self, factor: float) -> "McEstimate":
        return replace(self, mean=self.mean * factor, stderr=self.stderr * abs(factor))


# --- batch machinery ---------------------------------------------------------

def batch_rng(seed: int, batch: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(batch),))
    return np.random.Generator(np.random.PCG64(ss))


def _batch_stats(w: np.ndarray):
    n = w.size
    mean = float(np.mean(w)) if n else 0.0
    m2 = float(np.sum((w - mean) ** 2))
    return n, mean, m2, int(np.count_nonzero(w == 0.0))


def run_batches(cfg: McConfig, simulate) -> McEstimate:
    """Run ``simulate(rng, n) -> weights`` over all batches and merge in order."""
    sizes = [cfg.batch_size] * (cfg.paths // cfg.batch_size)
    if cfg.paths % cfg.batch_size:
        sizes.append(cfg.paths % cfg.batch_size)

    def job(b):
        return _batch_stats(np.asarray(simulate(batch_rng(cfg.seed, b), sizes[b]), dtype=float))

    if cfg.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            stats = list(ex.map(job, range(len(sizes))))
    else:
        stats = [job(b) for b in range(len(sizes))]

    n, mean, m2, zeros = 0, 0.0, 0.0, 0
    for nb, mb, m2b, zb in stats:
        tot = n + nb
        delta = mb - mean
        mean += delta * nb / tot
        m2 += m2b + delta * delta * n * nb / tot
        n, zeros = tot, zeros + zb
    var = m2 / (n - 1) if n > 1 else 0.0
    return McEstimate(mean=mean, stderr=math.sqrt(max(var, 0.0) / n), n=n, zero_weight_frac=zeros / n)


# --- path functional -----------------------------------------------------------

def integrate_potential_along_path(V: Potential, times, points, r_min: float = 1e-4) -> float:
    """Trapezoid estimate of int V(W_s) ds along a sampled path.

    Returns +inf (weight 0) when a sample lies inside the cutoff radius.
    """
    times = np.asarray(times, dtype=float)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if times.ndim != 1 or times.size != pts.shape[0] or times.size < 1:
        raise ValueError("malformed path: need one timestamp per point")
    if np.any(np.diff(times) <= 0):
        raise ValueError("malformed path: timestamps must increase strictly")
    r = np.linalg.norm(pts, axis=1)
    if np.any(r < r_min):
        return math.inf
    v = np.asarray(V(r), dtype=float)
    return float(np.sum(np.diff(times) * 0.5 * (v[1:] + v[:-1])))


# --- simulators -----------------------------------------------------------------

def _as_point(x, d):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != d:
        raise ValueError(f"point {x} does not have dimension {d}")
    return x


def _step_cap(V, vals, cfg, base):
    # V = 0 gives theta / 0 = inf, i.e. no cap
    with np.errstate(divide="ignore"):
        return np.minimum(cfg.substep_theta / vals, base)


class _Walk:
    """Shared bookkeeping for a batch of killed paths."""

    def __init__(self, V, cfg, start, n):
        self.V, self.cfg = V, cfg
        self.d = start.size
        self.z = np.tile(start, (n, 1))
        self.s = np.zeros(n)
        self.lw = np.zeros(n)
        self.v = np.full(n, float(V(np.linalg.norm(start))))
        self.idx = np.arange(n)
        self.out = np.zeros(n)
        self.kill_at_origin = V.singular and self.d == 1

    def advance(self, z1, h):
        """Accumulate the trapezoid weight for a step; return the dead mask."""
        r1 = np.abs(z1[:, 0]) if self.d == 1 else np.sqrt(np.einsum("ij,ij->i", z1, z1))
        v1 = np.asarray(self.V(r1), dtype=float)
        self.lw -= 0.5 * h * (self.v + v1)
        dead = r1 < self.cfg.r_min
        if self.kill_at_origin:
            z0, zz = self.z[:, 0], z1[:, 0]
            dead |= z0 * zz <= 0
            # probability of touching 0 between two same-sign samples
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                cross = np.exp(-np.maximum(z0 * zz, 0.0) / h)
                self.lw += np.log1p(-np.minimum(cross, 1.0))
        dead |= (self.lw < self.cfg.weight_floor) | ~np.isfinite(self.lw)
        self.z, self.v, self.s = z1, v1, self.s + h
        return dead

    def retire(self, finished, dead, value=None):
        """Store weights of finished paths and drop finished or dead ones."""
        good = finished & ~dead
        if value is None:
            self.out[self.idx[good]] = np.exp(self.lw[good])
        else:
            self.out[self.idx[good]] = value[good]
        keep = ~(finished | dead)
        if not keep.all():
            self.z, self.s, self.lw, self.v, self.idx = (
                self.z[keep], self.s[keep], self.lw[keep], self.v[keep], self.idx[keep])
        return self.idx.size


def _survival_batch(V, x, t, cfg):
    def simulate(rng, n):
        w = _Walk(V, cfg, x, n)
        steps = 0
        while w.idx.size:
            h = np.minimum(_step_cap(V, w.v, cfg, cfg.dt), t - w.s)
            z1 = w.z + np.sqrt(2.0 * h)[:, None] * rng.standard_normal(w.z.shape)
            dead = w.advance(z1, h)
            finished = w.s >= t * (1.0 - 1e-12)
            w.retire(finished, dead)
            steps += 1
            if steps >= cfg.max_steps:
                log.warning("survival: step budget exhausted with %d live paths", w.idx.size)
                break
        return w.out

    return simulate


def _bridge_batch(V, x, y, t, cfg, dt):
    def simulate(rng, n):
        w = _Walk(V, cfg, x, n)
        steps = 0
        while w.idx.size:
            tau = t - w.s
            h = np.minimum(_step_cap(V, w.v, cfg, dt), tau)
            last = h >= tau * (1.0 - 1e-12)
            h = np.where(last, tau, h)
            frac = np.where(last, 1.0, h / tau)
            var = np.where(last, 0.0, 2.0 * h * (tau - h) / tau)
            z1 = w.z + frac[:, None] * (y - w.z) + np.sqrt(var)[:, None] * rng.standard_normal(w.z.shape)
            z1[last] = y
            dead = w.advance(z1, h)
            w.retire(last, dead)
            steps += 1
            if steps >= cfg.max_steps:
                log.warning("bridge: step budget exhausted with %d live paths", w.idx.size)
                break
        return w.out

    return simulate


def survival_probability(V: Potential, x, t: float, cfg: McConfig) -> McEstimate:
    """Estimate P_x(lifetime > t) = E_x exp(-int_0^t V(W_s) ds)."""
    if t <= 0:
        raise ValueError("t must be positive")
    x = _as_point(x, V.d)
    if np.linalg.norm(x) == 0:
        raise ValueError("x must differ from the origin")
    if V.is_zero:
        # every weight is 1
        return McEstimate(1.0, 0.0, cfg.paths, 0.0)
    return run_batches(cfg, _survival_batch(V, x, float(t), cfg))


def heat_kernel(V: Potential, t: float, x, y, cfg: McConfig, dt: float | None = None) -> McEstimate:
    """p(t, x, y) = q(t, x, y) E[exp(-int V)] over Brownian bridges from x to y.

    ``dt`` overrides the base step (default ``cfg.dt``).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    x, y = _as_point(x, V.d), _as_point(y, V.d)
    if np.linalg.norm(x) == 0 or np.linalg.norm(y) == 0:
        raise ValueError("points must differ from the origin")
    q = gaussian_q(V.d, t, x, y)
    if V.d == 1 and V.singular and x[0] * y[0] < 0:
        return McEstimate(0.0, 0.0, cfg.paths, 1.0)
    if V.is_zero:
        return McEstimate(q, 0.0, cfg.paths, 0.0)
    est = run_batches(cfg, _bridge_batch(V, x, y, float(t), cfg, cfg.dt if dt is None else dt))
    return est.scaled(q)


def exit_before_death(V: Potential, x, R: float, t_cap: float, cfg: McConfig) -> McEstimate:
    """E_x[exp(-int_0^tau V) ; tau <= t_cap] with tau the exit time of B(0, R).

    Exits between samples are detected with the half-space crossing
    probability exp(-d0 d1 / h) against the tangent plane of the sphere.
    """
    x = _as_point(x, V.d)
    r0 = float(np.linalg.norm(x))
    if not 0 < r0 < R:
        raise ValueError("need 0 < |x| < R")
    t_cap = math.inf if t_cap is None else float(t_cap)

    def simulate(rng, n):
        w = _Walk(V, cfg, x, n)
        steps = 0
        while w.idx.size:
            gap = R - np.linalg.norm(w.z, axis=1)
            # sqrt(h) << R keeps the tangent plane a fair proxy for the sphere
            base = np.minimum(min(cfg.dt, R * R / 16), np.maximum(gap**2, 1e-12))
            h = np.minimum(_step_cap(V, w.v, cfg, base), t_cap - w.s)
            z1 = w.z + np.sqrt(2.0 * h)[:, None] * rng.standard_normal(w.z.shape)
            gap1 = R - np.linalg.norm(z1, axis=1)
            dead = w.advance(z1, h)
            with np.errstate(over="ignore"):
                cross = np.exp(-np.maximum(gap, 0) * np.maximum(gap1, 0) / h)
            exited = (gap1 <= 0) | (rng.random(h.size) < cross)
            timed_out = w.s >= t_cap * (1.0 - 1e-12)
            w.retire(exited, dead | (timed_out & ~exited))
            steps += 1
            if steps >= cfg.max_steps:
                log.warning("exit_before_death: step budget exhausted with %d live paths", w.idx.size)
                break
        return w.out

    return run_batches(cfg, simulate)


@dataclass(frozen=True)
class GreenEstimate(McEstimate):
    tail: float = 0.0
    t_max: float = math.inf


def green_mc(V: Potential, x, y, cfg: McConfig, t_max: float = 100.0, per_decade: int = 40,
             steps_per_path: int = 256) -> GreenEstimate:
    """Time integral of the heat kernel on log-spaced nodes.

    Nodes start at |x-y|^2/32 and run to ``t_max``. For d >= 3 the free tail
    int_{t_max}^inf q dt is added, scaled by the killed/free ratio observed
    at the last node (p <= q makes the unscaled tail an upper bracket). Each
    node uses base step max(cfg.dt, t/steps_per_path) and its own seed.
    """
    x, y = _as_point(x, V.d), _as_point(y, V.d)
    dist = float(np.linalg.norm(x - y))
    if dist == 0:
        raise ValueError("x and y must differ")
    if V.d <= 2:
        log.warning("green_mc: d=%d has no free tail bound; result truncated at t_max=%g", V.d, t_max)
    t_min = dist**2 / 32.0
    n_nodes = max(2, int(math.ceil(per_decade * math.log10(t_max / t_min))) + 1)
    ts = np.geomspace(t_min, t_max, n_nodes)
    means, errs = np.zeros(n_nodes), np.zeros(n_nodes)
    zero_frac = 0.0
    for k, t in enumerate(ts):
        node_cfg = replace(cfg, seed=(cfg.seed * 1_000_003 + k) & (2**63 - 1))
        est = heat_kernel(V, float(t), x, y, node_cfg, dt=max(cfg.dt, t / steps_per_path))
        means[k], errs[k] = est.mean, est.stderr
        zero_frac += est.zero_weight_frac / n_nodes
    # trapezoid in log t: int f dt = int f t dlog t
    lt = np.log(ts)
    wts = np.zeros(n_nodes)
    wts[1:] += 0.5 * np.diff(lt)
    wts[:-1] += 0.5 * np.diff(lt)
    wts *= ts
    total = float(np.dot(wts, means))
    err = float(np.sqrt(np.dot(wts**2, errs**2)))
    tail = 0.0
    if V.d >= 3:
        ratio = means[-1] / gaussian_q(V.d, ts[-1], x, y)
        tail = ratio * _free_tail(V.d, t_max, dist)
    return GreenEstimate(mean=total + tail, stderr=err, n=cfg.paths * n_nodes, zero_weight_frac=zero_frac,
                         tail=tail, t_max=t_max)


def _free_tail(d: int, t_max: float, dist: float) -> float:
    """int_{t_max}^inf (4 pi t)^{-d/2} exp(-dist^2/(4t)) dt for d >= 3."""
    from scipy import special

    a = d / 2 - 1
    # substitute u = dist^2/(4t): integral = dist^{2-d} pi^{-d/2}/4 * lower_gamma(a, dist^2/(4 t_max))
    u = dist**2 / (4 * t_max)
    if dist == 0:
        return (4 * math.pi) ** (-d / 2) * t_max ** (1 - d / 2) / (d / 2 - 1)
    return dist ** (2 - d) * math.pi ** (-d / 2) / 4 * special.gammainc(a, u) * special.gamma(a)


def newtonian_green(d: int, dist: float) -> float:
    """Free-space Green function int_0^inf q dt = Gamma(d/2-1) / (4 pi^{d/2} dist^{d-2})."""
    return math.gamma(d / 2 - 1) / (4 * math.pi ** (d / 2) * dist ** (d - 2))


__all__ = [
    "GreenEstimate",
    "McConfig",
    "McEstimate",
    "batch_rng",
    "exit_before_death",
    "green_mc",
    "heat_kernel",
    "integrate_potential_along_path",
    "log_gaussian_q",
    "newtonian_green",
    "run_batches",
    "survival_probability",
]
