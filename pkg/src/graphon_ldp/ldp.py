"""Rate functions, the dependent Bernstein bound and rare-event estimation for W-random graphs."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .dynamics import CouplingSpec, Trajectory, simulate
from .graphon import (
    EXACT_QUOTIENT_MAX_N,
    StepGraphon,
    _all_permutations,
    inf_one_norm,
    permutation_search,
    project,
)
from .random_graphs import (
    AdjacencyGraph,
    FiniteLaw,
    GridFunction,
    derive_seed,
    embed,
    log_likelihood_ratio,
    sample_tilted,
)

log = logging.getLogger(__name__)


@dataclass
class RateReport:
    value: float
    mode: str  # exact | heuristic-upper | heuristic-lower
    witness: object = None


@dataclass
class RareEventEstimate:
    p_hat: float
    log_p_per_n2: float
    std_err: float
    replicas: int
    event: dict = field(default_factory=dict)
    hits: int = 0


# ---------------------------------------------------------------------------
# rate functions


def _xlogy_ratio(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``x log(x/y)`` with ``0 log(0/y) = 0`` and ``x log(x/0) = inf`` for ``x > 0``."""
    out = np.zeros(np.broadcast(x, y).shape)
    x, y = np.broadcast_arrays(x, y)
    pos = x > 0
    ok = pos & (y > 0)
    out[ok] = x[ok] * (np.log(x[ok]) - np.log(y[ok]))
    out[pos & ~(y > 0)] = np.inf
    return out


def bernoulli_entropy(v, w) -> np.ndarray:
    """Cellwise relative entropy of Bernoulli(v) with respect to Bernoulli(w)."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return _xlogy_ratio(v, w) + _xlogy_ratio(1.0 - v, 1.0 - w)


def _same_grid(V: StepGraphon, W: StepGraphon):
    if V.n != W.n:
        raise ValueError(f"resolutions differ ({V.n} vs {W.n}); refine to a common grid first")


def _cell_mean(cells: np.ndarray) -> float:
    # correctly rounded sum: the value does not depend on the cell order
    if np.isinf(cells).any():
        return math.inf
    return math.fsum(cells.ravel()) / cells.size


def upsilon(V: StepGraphon, W: StepGraphon) -> RateReport:
    """Integrated Bernoulli relative entropy of ``V`` with respect to ``W``."""
    _same_grid(V, W)
    return RateReport(_cell_mean(bernoulli_entropy(V.values, W.values)), "exact")


def rate_quotient(V: StepGraphon, W: StepGraphon, mode: str = "exact", sweeps: int = 4, seed: int = 0) -> RateReport:
    """``min_sigma upsilon(V_sigma, W)`` over cell permutations; the witness is the minimizing sigma."""
    _same_grid(V, W)
    n = V.n
    Vv, Wv = V.values, W.values
    if mode == "exact":
        if n > EXACT_QUOTIENT_MAX_N:
            raise ValueError(f"exact quotient rate limited to n <= {EXACT_QUOTIENT_MAX_N}, got {n}")
        perms = _all_permutations(n)
        best, best_sigma = math.inf, perms[0]
        for start in range(0, len(perms), 4096):
            P = perms[start : start + 4096]
            vals = bernoulli_entropy(Vv[P[:, :, None], P[:, None, :]], Wv).mean(axis=(1, 2))
            k = int(np.argmin(vals))
            if vals[k] < best:
                best, best_sigma = float(vals[k]), P[k].copy()
        return RateReport(best, "exact", best_sigma)
    if mode != "heuristic":
        raise ValueError(f"unknown mode {mode!r}")

    def objective(sigma):
        return float(bernoulli_entropy(Vv[np.ix_(sigma, sigma)], Wv).mean())

    sigma, val = permutation_search(objective, Vv, Wv, sweeps, seed)
    return RateReport(float(val), "heuristic-upper", sigma)


def ell(z):
    """Poisson cost ``z log z - z + 1`` (``ell(0) = 1``)."""
    z = np.asarray(z, dtype=float)
    return _xlogy_ratio(z, np.ones_like(z)) - z + 1.0


def sparse_rate(V: StepGraphon, W: StepGraphon) -> RateReport:
    """``mean(W * ell(V / W))``, written as ``V log(V/W) - V + W`` to handle ``W = 0``."""
    _same_grid(V, W)
    v, w = V.values, W.values
    cells = _xlogy_ratio(v, w) - v + w
    return RateReport(_cell_mean(cells), "exact")


def clamp_kernel(W: StepGraphon, eps: float) -> StepGraphon:
    """``(W v eps) ^ (1 - eps)``, keeping relative entropies finite near degenerate kernels."""
    return StepGraphon(np.clip(W.values, eps, 1.0 - eps))


def h(u):
    """``(1+u) log(1+u) - u``."""
    u = np.asarray(u, dtype=float)
    return (1.0 + u) * np.log1p(u) - u


def bernstein_bound(N: int, c: float, delta: float) -> float:
    """Tail bound ``exp(-N h(delta/c))`` for averages of conditionally centred terms bounded by ``c``."""
    if N < 1 or c <= 0 or delta <= 0:
        raise ValueError("need N >= 1, c > 0 and delta > 0")
    return float(np.exp(-N * h(delta / c)))


def legendre_rate(mu: FiniteLaw, b: float, tol: float = 1e-10) -> float:
    """``sup_a [a b - log E_mu e^{a X}]`` for a finitely supported law."""
    x = np.array(mu.support)
    p = np.array(mu.probs)
    keep = p > 0
    x, p = x[keep], p[keep]
    lo, hi = x.min(), x.max()
    if b < lo or b > hi:
        return math.inf
    if lo == hi:
        return 0.0
    # the supremum is approached as a -> -inf / +inf at the hull endpoints
    if b == lo:
        return float(-np.log(p[x == lo].sum()))
    if b == hi:
        return float(-np.log(p[x == hi].sum()))
    logp = np.log(p)

    def slope(a):
        # b - Lambda'(a), strictly decreasing in a
        wts = np.exp(logp + a * x - logsumexp(logp + a * x))
        return b - float(wts @ x)

    a_lo, a_hi = -1.0, 1.0
    while slope(a_lo) < 0:
        a_lo *= 2.0
    while slope(a_hi) > 0:
        a_hi *= 2.0
    a = brentq(slope, a_lo, a_hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return max(0.0, float(a * b - logsumexp(logp + a * x)))


# ---------------------------------------------------------------------------
# rare events


def ball_predicate(
    center: StepGraphon,
    delta: float,
    norm_mode: str = "heuristic",
    restarts: int = 8,
    seed: int = 0,
    rescale: bool = False,
) -> Callable[[AdjacencyGraph], bool]:
    """Deterministic event ``d_inf_one(embed(X), center) <= delta``.

    The heuristic norm uses a frozen (restarts, seed) and always includes the
    all-ones test pair, so the constant-pair value is a valid early reject.
    """
    C = np.asarray(center.values, dtype=float)
    n2 = C.size

    def predicate(g: AdjacencyGraph) -> bool:
        diff = embed(g, rescale=rescale).values - C
        if abs(diff.sum()) / n2 > delta:
            return False
        return inf_one_norm(diff, mode=norm_mode, restarts=restarts, seed=seed) <= delta

    return predicate


def exact_event_probability(W: StepGraphon, predicate: Callable[[AdjacencyGraph], bool]) -> float:
    """Probability of ``predicate`` under the product Bernoulli(W) measure by full enumeration (n <= 3)."""
    n = W.n
    if n > 3:
        raise ValueError("exhaustive enumeration limited to n <= 3")
    w = W.values.reshape(-1)
    terms = []
    for pattern in itertools.product((0, 1), repeat=n * n):
        x = np.array(pattern)
        prob = math.prod(float(wi) if xi else 1.0 - float(wi) for xi, wi in zip(x, w))
        if prob > 0.0 and predicate(AdjacencyGraph(x.reshape(n, n))):
            terms.append(prob)
    return math.fsum(terms)


def importance_weight_total(Vn: StepGraphon, Wn: StepGraphon, event=None) -> float:
    """``E_V[exp(log_weight) 1_event]`` by enumeration over all ``2^{n^2}`` graphs (n <= 3)."""
    n = Vn.n
    if n > 3:
        raise ValueError("exhaustive enumeration limited to n <= 3")
    v = Vn.values
    terms = []
    for pattern in itertools.product((0, 1), repeat=n * n):
        x = np.array(pattern).reshape(n, n)
        theta = math.prod(float(vi) if xi else 1.0 - float(vi) for xi, vi in zip(x.ravel(), v.ravel()))
        if theta == 0.0:
            continue
        if event is not None and not event(AdjacencyGraph(x)):
            continue
        terms.append(theta * math.exp(log_likelihood_ratio(x, v, Wn.values)))
    return math.fsum(terms)


def estimate_rare_event(
    W,
    V_target,
    n: int,
    delta: float,
    norm_mode: str = "heuristic",
    replicas: int = 10_000,
    seed: int = 0,
    restarts: int = 8,
    norm_seed: int = 0,
) -> RareEventEstimate:
    """Importance-sampling estimate of ``P_W(d(embed(X), V_target^n) <= delta)``.

    Graphs are drawn from the product measure of ``V_target^n`` and weighted by
    the likelihood ratio against ``W^n``.
    """
    Wn, Vn = project(W, n), project(V_target, n)
    event = ball_predicate(Vn, delta, norm_mode, restarts, norm_seed)
    contrib = np.zeros(replicas)
    hits = 0
    for r in range(replicas):
        sample = sample_tilted(Vn, Wn, derive_seed(seed, r))
        if event(sample.graph):
            hits += 1
            contrib[r] = math.exp(sample.log_weight)
    p_hat = float(contrib.mean())
    std_err = float(contrib.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
    if p_hat > 1.0:
        log.warning("importance-sampling estimate %.6g exceeds 1; clipped", p_hat)
        p_hat = 1.0
    if p_hat > 0.0:
        rate = -math.log(p_hat) / n**2
    else:
        log.warning("no event hits in %d replicas", replicas)
        rate = math.inf
    info = {"n": n, "radius": float(delta), "norm_mode": norm_mode, "restarts": restarts, "norm_seed": norm_seed}
    return RareEventEstimate(p_hat, rate, std_err, replicas, info, hits)


# ---------------------------------------------------------------------------
# dynamical rate by forward penalized search


def terminal_l2(traj: Trajectory) -> float:
    return float(np.sqrt(np.mean(traj.states[-1] ** 2)))


def order_parameter(traj: Trajectory) -> float:
    """Kuramoto order parameter ``|mean exp(2 pi i u)|`` at the final time."""
    return float(np.abs(np.mean(np.exp(2j * np.pi * traj.states[-1]))))


def terminal_mean(traj: Trajectory) -> float:
    return float(np.mean(traj.states[-1]))


OBSERVABLES = {"terminal_l2": terminal_l2, "order_parameter": order_parameter, "terminal_mean": terminal_mean}


class DynamicalRate(NamedTuple):
    best_V: StepGraphon
    cost: float
    upsilon: float
    penalty: float
    observable: float
    trajectory: Trajectory
    converged: bool


def dynamical_rate_search(
    W,
    g: GridFunction,
    coupling: CouplingSpec,
    observable,
    target_level: float,
    resolution: int,
    *,
    T: float,
    dt: float,
    lam: float = 100.0,
    iterations: int = 20,
    step: float = 0.5,
    seed: int = 0,
    eps: float = 1e-3,
    fd_step: float = 1e-4,
    init: StepGraphon | None = None,
    tol: float = 1e-10,
) -> DynamicalRate:
    """Projected coordinate descent on ``upsilon(V, W^r) + lam (obs(F(V, g)) - target)^2``.

    ``V`` lives on ``r x r`` cells in ``[eps, 1 - eps]`` and is refined to the
    node count of ``g`` for simulation.  The returned cost is an upper bound
    on the dynamical rate at the achieved observable level.
    """
    if isinstance(observable, str):
        observable = OBSERVABLES[observable]
    r = resolution
    if g.n % r:
        raise ValueError("simulation resolution must be a multiple of the search resolution")
    Wr = clamp_kernel(project(W, r), eps)
    w = Wr.values
    rng = np.random.default_rng(seed)

    def run(vals):
        traj = simulate(StepGraphon(vals).refine(g.n), g, coupling, T, dt, save_every=max(1, int(round(T / dt))))
        return traj, observable(traj)

    def total(vals, obs):
        ups = float(bernoulli_entropy(vals, w).mean())
        pen = lam * (obs - target_level) ** 2
        return ups + pen, ups, pen

    V = np.clip(init.values if init is not None else w, eps, 1.0 - eps).astype(float)
    traj, obs = run(V)
    cost = total(V, obs)[0]
    converged = False
    for _ in range(iterations):
        before = cost
        for flat in rng.permutation(r * r):
            i, j = divmod(int(flat), r)
            v = V[i, j]
            h_fd = fd_step if v + fd_step <= 1.0 - eps else -fd_step
            probe = V.copy()
            probe[i, j] = v + h_fd
            _, obs_probe = run(probe)
            d_obs = (obs_probe - obs) / h_fd
            d_ups = (math.log(v / w[i, j]) - math.log((1 - v) / (1 - w[i, j]))) / (r * r)
            grad = d_ups + 2.0 * lam * (obs - target_level) * d_obs
            s = step
            for _ in range(30):
                cand = V.copy()
                cand[i, j] = min(max(v - s * grad, eps), 1.0 - eps)
                if cand[i, j] == v:
                    break
                traj_c, obs_c = run(cand)
                cost_c = total(cand, obs_c)[0]
                if cost_c < cost:
                    V, traj, obs, cost = cand, traj_c, obs_c, cost_c
                    break
                s *= 0.5
        if before - cost <= tol * max(1.0, abs(before)):
            converged = True
            break
    cost, ups, pen = total(V, obs)
    if not converged:
        log.warning("dynamical rate search stopped after %d iterations without converging", iterations)
    return DynamicalRate(StepGraphon(V), cost, ups, pen, obs, traj, converged)
