"""Fixed-step RK4 for interacting particle systems on step kernels and their continuum limits.

The node system is

    u_i' = f(u_i, xi_i, t) + (1/n) * sum_j K_ij D(u_i, u_j),

which is at the same time the adjacency-driven network model (``K`` an
embedded graph, rescaled by ``1/alpha`` in the sparse case) and the Galerkin
scheme for the nonlocal equation with a projected kernel.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .graphon import StepGraphon, _swap_search, check_permutation, project
from .random_graphs import GridFunction, cell_average

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# coupling registry


@dataclass(frozen=True)
class Interaction:
    name: str
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lipschitz: float
    bound: float


INTERACTIONS = {
    "kuramoto": Interaction("kuramoto", lambda u, v: np.sin(TWO_PI * (v - u)), TWO_PI, 1.0),
    # unbounded: admitted only for closed-form checks, exempt from a priori bounds
    "linear": Interaction("linear", lambda u, v: v - u, 1.0, math.inf),
    "tanh_diff": Interaction("tanh_diff", lambda u, v: np.tanh(v - u), 1.0, 1.0),
}


@dataclass(frozen=True)
class CouplingSpec:
    """Intrinsic dynamics ``f`` and pair interaction ``D`` by registry name.

    ``f`` is one of ``zero``, ``constant_drift`` (``drift`` parameter) or
    ``frequency`` (``f = xi_i``, the node parameter).
    """

    f: str = "zero"
    D: str = "kuramoto"
    drift: float = 0.0

    def __post_init__(self):
        if self.f not in ("zero", "constant_drift", "frequency"):
            raise ValueError(f"unknown intrinsic dynamics {self.f!r}")
        if self.D not in INTERACTIONS:
            raise ValueError(f"unknown interaction {self.D!r}")

    @property
    def interaction(self) -> Interaction:
        return INTERACTIONS[self.D]

    @property
    def L_f(self) -> float:
        return 0.0

    @property
    def L_D(self) -> float:
        return self.interaction.lipschitz

    @property
    def bound_D(self) -> float:
        return self.interaction.bound

    def bound_f(self, params: GridFunction | None = None) -> float:
        if self.f == "zero":
            return 0.0
        if self.f == "constant_drift":
            return abs(self.drift)
        if params is None:
            raise ValueError("frequency dynamics need node parameters")
        return float(np.abs(params.values).max())

    @property
    def bound_exempt(self) -> bool:
        return not math.isfinite(self.bound_D)

    @property
    def ident(self) -> str:
        return f"{self.f}+{self.D}"

    def intrinsic(self, u: np.ndarray, xi: np.ndarray | None, t: float) -> np.ndarray:
        if self.f == "zero":
            return np.zeros_like(u)
        if self.f == "constant_drift":
            return np.full_like(u, self.drift)
        return np.array(xi, dtype=float, copy=True)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), n)
    dt: float
    save_every: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] != times.size:
            raise ValueError("need one state row per saved time")
        if times.size == 0 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must increase from 0")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def state(self, k: int) -> GridFunction:
        return GridFunction(self.states[k])

    def permuted(self, sigma) -> "Trajectory":
        sigma = check_permutation(sigma, self.n)
        return Trajectory(self.times, self.states[:, sigma], self.dt, self.save_every, dict(self.meta))


def _rhs_factory(K: np.ndarray, coupling: CouplingSpec, xi):
    n = K.shape[0]
    D = coupling.interaction.func

    def rhs(u, t):
        pair = K * D(u[:, None], u[None, :])
        # summing each row in sorted order makes the result independent of
        # the node labelling, so permuted inputs give bitwise-permuted output
        inter = np.sort(pair, axis=1).sum(axis=1) / n
        return coupling.intrinsic(u, xi, t) + inter

    return rhs


def stable_dt(coupling: CouplingSpec, kernel_bound: float) -> float:
    """Largest admissible step ``0.1 / (L_f + 2 B L_D)``."""
    return 0.1 / (coupling.L_f + 2.0 * kernel_bound * coupling.L_D)


def simulate(
    kernel: StepGraphon,
    g: GridFunction,
    coupling: CouplingSpec,
    T: float,
    dt: float,
    save_every: int = 1,
    params: GridFunction | None = None,
) -> Trajectory:
    """Classic RK4 on the ``n``-node system driven by ``kernel``.

    Snapshots are stored every ``save_every`` steps and at the final time.
    """
    n = g.n
    if kernel.n != n:
        raise ValueError(f"kernel resolution {kernel.n} differs from initial data resolution {n}")
    if params is not None and params.n != n:
        raise ValueError("parameter resolution differs from initial data resolution")
    if coupling.f == "frequency" and params is None:
        raise ValueError("frequency dynamics need node parameters")
    if T <= 0 or dt <= 0 or save_every < 1:
        raise ValueError("T, dt and save_every must be positive")
    limit = stable_dt(coupling, kernel.upper_bound)
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the stability guard {limit:.6g}")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")

    xi = None if params is None else params.values
    rhs = _rhs_factory(np.asarray(kernel.values, dtype=float), coupling, xi)
    u = np.array(g.values, dtype=float)
    times, states = [0.0], [u.copy()]
    # overflow is detected below and reported with context
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            t = k * dt
            k1 = rhs(u, t)
            k2 = rhs(u + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = rhs(u + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = rhs(u + dt * k3, t + dt)
            u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(u)):
                raise FloatingPointError(f"state became non-finite at t={t + dt:.6g} ({coupling.ident})")
            if (k + 1) % save_every == 0 or k + 1 == steps:
                times.append((k + 1) * dt)
                states.append(u.copy())
    meta = {"coupling": coupling.ident, "kernel_bound": kernel.upper_bound, "n": n}
    return Trajectory(np.array(times), np.array(states), dt, save_every, meta)


def solve_continuum(
    W,
    g,
    coupling: CouplingSpec,
    m: int,
    T: float,
    dt: float,
    save_every: int = 1,
    params: GridFunction | None = None,
) -> Trajectory:
    """Galerkin approximation of the nonlocal equation at resolution ``m``.

    ``W`` (callable, registry string or step graphon) and ``g`` (callable or
    grid function) are projected onto ``m`` cells before integrating.
    """
    Wm = project(W, m)
    if isinstance(g, GridFunction):
        gm = g.coarsen(m) if g.n % m == 0 else g.refine(m)
    else:
        gm = cell_average(g, m)
    if params is not None and params.n != m:
        params = params.coarsen(m) if params.n % m == 0 else params.refine(m)
    return simulate(Wm, gm, coupling, T, dt, save_every, params)


def _check_times(u: Trajectory, v: Trajectory):
    if u.times.shape != v.times.shape or not np.allclose(u.times, v.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories are saved on different time grids")


def trajectory_distance(u: Trajectory, v: Trajectory) -> float:
    """``max_t ||u(t) - v(t)||_{L^2}`` over the common saved times."""
    _check_times(u, v)
    m = math.lcm(u.n, v.n)
    a = np.repeat(u.states, m // u.n, axis=1)
    b = np.repeat(v.states, m // v.n, axis=1)
    return float(np.sqrt(np.mean((a - b) ** 2, axis=1)).max())


class QuotientTrajectoryDistance(NamedTuple):
    distance: float
    permutation: np.ndarray
    exact: bool


def quotient_trajectory_distance(u: Trajectory, v: Trajectory, sweeps: int = 4, seed: int = 0):
    """``min_sigma d(u_sigma, v)`` over node relabellings applied to all snapshots.

    Exact enumeration for ``n <= 8``; otherwise swap local search started from
    the rank matching of time-averaged states, giving an upper bound.
    """
    _check_times(u, v)
    if u.n != v.n:
        raise ValueError("quotient distance needs equal node counts")
    n = u.n
    U, V = u.states, v.states

    def objective(sigma):
        return float(np.sqrt(np.mean((U[:, sigma] - V) ** 2, axis=1)).max())

    if n <= 8:
        best, best_sigma = math.inf, None
        for perm in itertools.permutations(range(n)):
            sigma = np.array(perm, dtype=np.intp)
            val = objective(sigma)
            if val < best:
                best, best_sigma = val, sigma
        return QuotientTrajectoryDistance(best, best_sigma, True)

    rng = np.random.default_rng(seed)
    start = np.empty(n, dtype=np.intp)
    start[np.argsort(V.mean(axis=0), kind="stable")] = np.argsort(U.mean(axis=0), kind="stable")
    best_sigma, best = None, math.inf
    for s in (start, np.arange(n)):
        sigma, val = _swap_search(objective, s, sweeps, rng)
        if val < best:
            best_sigma, best = sigma, val
    return QuotientTrajectoryDistance(best, best_sigma, False)


def a_priori_bound_check(
    traj: Trajectory,
    coupling: CouplingSpec,
    g: GridFunction,
    params: GridFunction | None = None,
    kernel_bound: float | None = None,
) -> bool:
    """True iff ``|u(t)| <= ||g||_inf + (bound_f + B bound_D) t`` at every snapshot."""
    if coupling.bound_exempt:
        raise ValueError(f"interaction {coupling.D!r} is unbounded and exempt from a priori bounds")
    B = kernel_bound if kernel_bound is not None else traj.meta.get("kernel_bound", 1.0)
    rate = coupling.bound_f(params) + B * coupling.bound_D
    limit = np.abs(g.values).max() + rate * traj.times
    return bool(np.all(np.abs(traj.states).max(axis=1) <= limit * (1 + 1e-12) + 1e-12))
