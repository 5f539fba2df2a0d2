"""Implicit solvers for the radial equation u_t = u'' + (d-1)/r u' - V u.

The spatial operator is a finite-volume discretisation on a non-uniform grid:
cell measures ``m_i`` (r^{d-1} dr integrated over the dual cell) and face
coefficients ``r_f^{d-1} / (r_{i+1} - r_i)``. Multiplied by ``m`` it is a
symmetric tridiagonal matrix, which keeps the discrete kernel symmetric.
Time stepping is BDF2 by default, with Crank-Nicolson and implicit Euler
available. The first step is replaced by implicit-Euler sub-steps
(Rannacher start-up) to damp the rough initial data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .envelopes import ModelParams, log_h_tilde
from .potentials import Potential

log = logging.getLogger(__name__)

V_CAP = 1e12
SCHEMES = ("bdf2", "crank_nicolson", "implicit_euler")
STABILITY_SLACK = 1e-8


class SolverInstability(RuntimeError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    r_min: float
    r_max: float
    nodes: np.ndarray
    dt: float
    scheme: str = "bdf2"
    startup_steps: int = 2

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if nodes.size < 3 or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing with at least 3 entries")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def build(cls, r_min: float, r_max: float, dt: float, per_decade: int = 200,
              h_outer: float = 0.01, **kw) -> "RadialGrid":
        """Log-spaced nodes on [r_min, min(1, r_max)], uniform spacing h_outer beyond 1."""
        top = min(1.0, r_max)
        n_log = max(3, int(math.ceil(per_decade * math.log10(top / r_min))) + 1)
        inner = np.geomspace(r_min, top, n_log)
        if r_max > 1.0:
            n_out = max(1, int(math.ceil((r_max - 1.0) / h_outer)))
            outer = np.linspace(1.0, r_max, n_out + 1)[1:]
            inner = np.concatenate([inner, outer])
        return cls(r_min=r_min, r_max=r_max, nodes=inner, dt=dt, **kw)

    def refined(self) -> "RadialGrid":
        """Twice the nodes (midpoints inserted) and half the time step."""
        mids = 0.5 * (self.nodes[1:] + self.nodes[:-1])
        nodes = np.sort(np.concatenate([self.nodes, mids]))
        return RadialGrid(self.r_min, self.r_max, nodes, self.dt / 2, self.scheme, self.startup_steps)


def inner_cutoff(p: ModelParams, exponent: float = 300.0) -> float:
    """Radius where the boundary factor exp(-sqrt(kappa)/(beta r^beta)) reaches e^{-exponent}."""
    return (p.sqrt_kappa / (exponent * p.beta)) ** (1.0 / p.beta)


def default_grid(V: Potential, t: float, r_max: float | None = None, per_decade: int = 200,
                 h_outer: float | None = None, steps: int = 1000) -> RadialGrid:
    r_min = inner_cutoff(V.params) if V.singular else 1e-6
    if r_max is None:
        r_max = 8.0 * math.sqrt(t) + 1.0
    if h_outer is None:
        h_outer = max(0.01, (r_max - 1.0) / 4000.0)
    return RadialGrid.build(r_min, r_max, t / steps, per_decade=per_decade, h_outer=h_outer)


def cap_potential(V: Potential, g: RadialGrid):
    """V at the nodes clamped to V_CAP, and the mask of nodes treated as absorbing."""
    with np.errstate(over="ignore"):
        raw = np.asarray(V(g.nodes), dtype=float)
    capped = np.minimum(raw, V_CAP)
    return capped, raw >= V_CAP


@dataclass
class RadialSolution:
    nodes: np.ndarray
    u: np.ndarray
    t: float

    def __call__(self, r):
        """Interpolate; log-linear where both neighbours are positive."""
        r = np.asarray(r, dtype=float)
        i = np.clip(np.searchsorted(self.nodes, r) - 1, 0, self.nodes.size - 2)
        r0, r1 = self.nodes[i], self.nodes[i + 1]
        u0, u1 = self.u[i], self.u[i + 1]
        lam = (r - r0) / (r1 - r0)
        pos = (u0 > 0) & (u1 > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logint = np.exp((1 - lam) * np.log(np.where(pos, u0, 1.0)) + lam * np.log(np.where(pos, u1, 1.0)))
        out = np.where(pos, logint, (1 - lam) * u0 + lam * u1)
        return out if out.ndim else float(out)

    def table(self) -> dict:
        return {"r": self.nodes, "u": self.u}


def _reference(V: Potential):
    """Log ground-state weight log h_tilde and kappa r^{-2-2beta}; None for regular V."""
    if not V.singular:
        return None
    p = V.params
    return (lambda r: log_h_tilde(p, r)), (lambda r: p.kappa * r ** (-2.0 - 2.0 * p.beta))


def _operator(d: int, nodes: np.ndarray, ref=None):
    """Cell measures m and the symmetric tridiagonal (off, diag) of m * (Laplacian - V_ref).

    With a reference ``(log_phi, V_ref)`` where phi is harmonic for Delta - V_ref,
    the flux through a face is c_f phi_f^2 (u_j/phi_j - u_i/phi_i), which is
    exact for u = phi. Without one, phi = 1 and V_ref = 0.
    """
    n = nodes.size
    faces = np.empty(n + 1)
    faces[1:-1] = 0.5 * (nodes[1:] + nodes[:-1])
    faces[0] = nodes[0]
    faces[-1] = nodes[-1]
    m = (faces[1:] ** d - faces[:-1] ** d) / d
    coef = faces[1:-1] ** (d - 1) / np.diff(nodes)
    if ref is None:
        off, lo_w, up_w = coef, coef, coef
        vref = np.zeros(n)
    else:
        log_phi, v_ref = ref
        ln = np.asarray(log_phi(nodes), dtype=float)
        lf = np.asarray(log_phi(faces[1:-1]), dtype=float)
        off = coef * np.exp(2 * lf - ln[:-1] - ln[1:])
        lo_w = coef * np.exp(2 * (lf - ln[1:]))   # face below node i+1
        up_w = coef * np.exp(2 * (lf - ln[:-1]))  # face above node i
        vref = np.minimum(v_ref(nodes), V_CAP)
    diag = np.zeros(n)
    diag[:-1] -= up_w
    diag[1:] -= lo_w
    # plain zero flux at r_max; the one-sided weighted row would act as a source there
    diag[-1] = -off[-1]
    vref[-1] = 0.0
    return m, off, diag, vref


def _stiffness(d, nodes, Vn, absorbing, ref):
    m, off, diag, vref = _operator(d, nodes, ref)
    vres = np.where(absorbing, 0.0, Vn - vref)
    return m, sparse.diags([off, diag - m * vres, off], [-1, 0, 1], format="csr")


def _evolve(d, nodes, Vn, absorbing, u0, t, dt, outer, outer_value, scheme, startup, check=True, times=None,
            ref=None):
    """Advance m du/dt = K u - m V u with Dirichlet nodes fixed; return u at t (and snapshots)."""
    n = nodes.size
    m, K = _stiffness(d, nodes, Vn, absorbing, ref)
    fixed = absorbing.copy()
    fixed[0] = True
    if outer == "dirichlet":
        fixed[-1] = True
    free = ~fixed
    Kff = K[free][:, free].tocsc()
    Kfb = K[free][:, fixed]
    ub = np.zeros(n)
    if outer == "dirichlet":
        ub[-1] = outer_value
    src = Kfb @ ub[fixed]
    mf = m[free]
    Mf = sparse.diags(mf, format="csc")

    cache = {}

    def stepper(theta, h):
        key = (theta, h)
        if key not in cache:
            cache[key] = splinalg.factorized((Mf - theta * h * Kff).tocsc())
        solve = cache[key]

        def step(v):
            rhs = mf * v + (1 - theta) * h * (Kff @ v) + h * src
            return solve(rhs)

        return step

    nsteps = max(1, int(math.ceil(t / dt - 1e-9)))
    h = t / nsteps
    v = np.asarray(u0, dtype=float)[free].copy()
    theta_main = 0.5 if scheme == "crank_nicolson" else 1.0
    snaps = {}
    targets = sorted(times) if times is not None else []
    elapsed = 0.0
    k = 0
    lo, hi = min(0.0, outer_value), max(float(np.max(u0)), outer_value)

    def record(v_free):
        full = ub.copy()
        full[free] = v_free
        return full

    if startup > 0:
        half = stepper(1.0, h / startup)
        for _ in range(startup):
            v = half(v)
        elapsed, k = h, 1
    if scheme == "bdf2":
        # BDF2 is L-stable: CN lets stiff modes ring at amplification near -1,
        # which swamps the e^{-40}-sized values in the boundary layer.
        bdf = splinalg.factorized((1.5 * Mf - h * Kff).tocsc())
        prev = np.asarray(u0, dtype=float)[free].copy()
        if startup == 0:
            v = stepper(1.0, h)(v)
            elapsed, k = h, 1
    else:
        main = stepper(theta_main, h)
    while k < nsteps:
        while targets and targets[0] <= elapsed + 1e-12 * t:
            snaps[targets.pop(0)] = record(v)
        if scheme == "bdf2":
            v, prev = bdf(mf * (2.0 * v - 0.5 * prev) + h * src), v
        else:
            v = main(v)
        k += 1
        elapsed = k * h
    while targets:
        snaps[targets.pop(0)] = record(v)
    u = record(v)
    if check and (u.min() < lo - STABILITY_SLACK or u.max() > hi + STABILITY_SLACK):
        raise SolverInstability(f"solution left [{lo}, {hi}]: min={u.min():.3e} max={u.max():.3e}")
    return u, snaps


def solve_radial(V: Potential, g: RadialGrid, t: float, u0=1.0, outer: str = "neumann",
                 outer_value: float = 0.0, times=None):
    """General radial solve with absorbing inner cutoff; returns a RadialSolution at t.

    ``outer`` is ``"neumann"`` (zero flux at r_max) or ``"dirichlet"`` with
    ``outer_value``. With ``times`` a dict of snapshots is returned as well.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    Vn, absorbing = cap_potential(V, g)
    u_init = np.broadcast_to(np.asarray(u0, dtype=float), g.nodes.shape).copy()
    u_init[absorbing] = 0.0
    u_init[0] = 0.0
    if outer == "dirichlet":
        u_init[-1] = outer_value
    u, snaps = _evolve(V.d, g.nodes, Vn, absorbing, u_init, t, g.dt, outer, outer_value, g.scheme,
                       g.startup_steps, times=times, ref=_reference(V))
    sol = RadialSolution(g.nodes, u, t)
    if times is None:
        return sol
    return sol, {s: RadialSolution(g.nodes, uu, s) for s, uu in snaps.items()}


def solve_survival(V: Potential, p: ModelParams | None, g: RadialGrid, t: float) -> RadialSolution:
    """u(t, r) = P_r(lifetime > t): u(0) = 1, absorbing at r_min, zero flux at r_max."""
    if p is not None and p != V.params:
        raise ValueError("model parameters do not match the potential")
    if g.r_max < 8 * math.sqrt(t) + 1 - 1e-12:
        raise ValueError(f"r_max={g.r_max} is below 8 sqrt(t) + 1")
    return solve_radial(V, g, t, 1.0, "neumann")


def solve_confined_survival(V: Potential, g: RadialGrid, t: float) -> RadialSolution:
    """P_r(exit time of B(0, r_max) > t and lifetime > t): absorbing also at r_max."""
    return solve_radial(V, g, t, 1.0, "dirichlet", 0.0)


def solve_exit_capped(V: Potential, g: RadialGrid, t: float) -> RadialSolution:
    """P_r(exit of B(0, r_max) happens before both death and time t)."""
    return solve_radial(V, g, t, 0.0, "dirichlet", 1.0)


def solve_exit_probability(V: Potential, g: RadialGrid) -> RadialSolution:
    """P_r(exit of B(0, r_max) before death): steady problem with w(r_max) = 1."""
    Vn, absorbing = cap_potential(V, g)
    n = g.nodes.size
    _, K = _stiffness(V.d, g.nodes, Vn, absorbing, _reference(V))
    fixed = absorbing.copy()
    fixed[0] = fixed[-1] = True
    free = ~fixed
    ub = np.zeros(n)
    ub[-1] = 1.0
    rhs = -(K[free][:, fixed] @ ub[fixed])
    w = ub.copy()
    w[free] = splinalg.spsolve(K[free][:, free].tocsc(), rhs)
    return RadialSolution(g.nodes, w, math.inf)


def _mass_at(nodes, m, y):
    """Unit point mass at y split linearly between the neighbouring nodes (density values)."""
    u0 = np.zeros(nodes.size)
    j = int(np.clip(np.searchsorted(nodes, y) - 1, 0, nodes.size - 2))
    lam = (y - nodes[j]) / (nodes[j + 1] - nodes[j])
    u0[j] += (1 - lam) / m[j]
    u0[j + 1] += lam / m[j + 1]
    return u0


def kernel_profile_1d(V: Potential, t: float, y: float, g: RadialGrid) -> RadialSolution:
    """z -> p(t, z, y) on the half-line grid, absorbing at both ends."""
    if V.d != 1:
        raise ValueError("the line-grid kernel solver is for d = 1")
    if not g.r_min < y < g.r_max:
        raise ValueError("y must lie inside the grid")
    Vn, absorbing = cap_potential(V, g)
    m = _operator(1, g.nodes)[0]
    u0 = _mass_at(g.nodes, m, y)
    u0[absorbing] = 0.0
    u, _ = _evolve(1, g.nodes, Vn, absorbing, u0, t, g.dt, "dirichlet", 0.0, g.scheme, g.startup_steps,
                   check=False, ref=_reference(V))
    if u.min() < -STABILITY_SLACK * max(u.max(), 1.0):
        raise SolverInstability(f"kernel went negative: {u.min():.3e}")
    return RadialSolution(g.nodes, np.maximum(u, 0.0), t)


def solve_kernel_1d(V: Potential, t: float, x: float, y: float, g: RadialGrid) -> float:
    """d = 1 heat kernel p(t, x, y) for x, y > 0 (paths through the origin are killed)."""
    if not g.r_min < x < g.r_max:
        raise ValueError("x must lie inside the grid")
    return float(kernel_profile_1d(V, t, y, g)(x))


def kernel_grid_1d(V: Potential, t: float, points=(), steps: int = 2000, per_decade: int = 200,
                   h_outer: float = 0.005) -> RadialGrid:
    """Grid for the line kernel: r_max clears the points by 8 sqrt(t) + 1."""
    r_min = inner_cutoff(V.params) if V.singular else 1e-6
    far = max([1.0, *points])
    return RadialGrid.build(r_min, far + 8.0 * math.sqrt(t) + 1.0, t / steps, per_decade=per_decade,
                            h_outer=h_outer)


def chapman_kolmogorov_1d(V: Potential, t: float, x: float, y: float, g: RadialGrid) -> tuple[float, float]:
    """(int p(t/2,x,z) p(t/2,z,y) dz, p(t,x,y)) from the grid solver."""
    px = kernel_profile_1d(V, t / 2, x, g)
    py = kernel_profile_1d(V, t / 2, y, g)
    m = _operator(1, g.nodes)[0]
    return float(np.sum(m * px.u * py.u)), solve_kernel_1d(V, t, x, y, g)
