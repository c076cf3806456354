"""Reproducible experiment drivers shared by the command line and the acceptance suite.

Each driver returns a list of flat dict rows sorted by its ladder key, so
the caller can write them straight to CSV.  Replica ``r`` at ladder point
``n`` always uses ``derive_seed(seed, ...)`` with a fixed key, which makes
the output independent of how points are scheduled across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

from .dynamics import CouplingSpec, simulate, solve_continuum, stable_dt, trajectory_distance
from .graphon import StepGraphon, cut_norm, d_inf_one, inf_one_norm, project
from .ldp import (
    ball_predicate,
    bernoulli_entropy,
    estimate_rare_event,
    exact_event_probability,
    h,
    rate_quotient,
    sparse_rate,
    upsilon,
)
from .random_graphs import (
    GridFunction,
    cell_average,
    derive_seed,
    embed,
    l2_distance,
    sample_sparse,
    sample_w_random,
)
from .staircase import random_coupling, staircase_bijection, staircase_convergence


def parallel_map(func: Callable, items: Sequence, threads: int = 1) -> list:
    """``[func(x) for x in items]``, optionally on a thread pool; order is preserved."""
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def is_nonincreasing(values: Sequence[float], tol: float = 0.0) -> bool:
    return all(b <= a + tol for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# norms


def tight_pair() -> tuple[StepGraphon, StepGraphon]:
    """The 2x2 pair whose difference has cut norm 1/4 and infinity-to-one norm 1."""
    return StepGraphon(np.eye(2)), StepGraphon(1.0 - np.eye(2))


def norms_table(pairs: Iterable[tuple[str, StepGraphon, StepGraphon]], restarts: int = 16, seed: int = 0) -> list[dict]:
    rows = []
    for name, f, g in pairs:
        K = f - g
        row = {"pair": name, "n": K.n}
        if K.n <= 22:
            row["cut_exact"] = cut_norm(K)
            row["inf_one_exact"] = inf_one_norm(K)
            row["ratio"] = row["inf_one_exact"] / row["cut_exact"] if row["cut_exact"] > 0 else math.nan
        row["cut_heuristic"] = cut_norm(K, "heuristic", restarts, seed)
        row["inf_one_heuristic"] = inf_one_norm(K, "heuristic", restarts, seed)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# law of large numbers in the cut distance


def lln_ladder(
    kernel,
    ns: Sequence[int],
    seeds: int,
    seed: int = 0,
    restarts: int = 8,
    norm_seed: int = 0,
    sparse_exponent: float | None = None,
    threads: int = 1,
) -> list[dict]:
    """Median ``d(embed(X^n), W^n)`` over ``seeds`` samples at each ``n``.

    With ``sparse_exponent = e`` graphs are sparse with ``alpha_n = n^-e`` and
    are rescaled by ``1/alpha_n`` before comparison.
    """

    def point(n):
        Wn = project(kernel, n)
        alpha = 1.0 if sparse_exponent is None else float(n) ** (-sparse_exponent)
        dists = []
        for r in range(seeds):
            s = derive_seed(seed, n * 1_000_003 + r)
            if sparse_exponent is None:
                g = sample_w_random(Wn, s)
            else:
                g = sample_sparse(Wn, alpha, s)
            dists.append(d_inf_one(embed(g, rescale=True), Wn, "heuristic", restarts, norm_seed))
        bound = 2.0 * math.exp(n * math.log(2.0)) * math.exp(-(n**2) * float(h(alpha * 0.1)))
        return {
            "n": n,
            "alpha": alpha,
            "median": float(np.median(dists)),
            "mean": float(np.mean(dists)),
            "max": float(np.max(dists)),
            "union_bound_delta_0.1": min(1.0, bound),
        }

    return parallel_map(point, sorted(ns), threads)


# ---------------------------------------------------------------------------
# dynamics


def closed_form_pair(t) -> tuple[float, float]:
    """Exact solution of the 2-node linear mean-field system from (1, 0) on the complete graph."""
    e = math.exp(-t)
    return 0.5 + 0.5 * e, 0.5 - 0.5 * e


def rk4_oracle(dts: Sequence[float] = (1e-3, 5e-4), T: float = 1.0) -> list[dict]:
    rows = []
    for dt in dts:
        traj = simulate(
            StepGraphon(np.ones((2, 2))),
            GridFunction([1.0, 0.0]),
            CouplingSpec("zero", "linear"),
            T,
            dt,
            save_every=int(round(T / dt)),
        )
        exact = closed_form_pair(T)
        err = max(abs(traj.states[-1, 0] - exact[0]), abs(traj.states[-1, 1] - exact[1]))
        rows.append({"dt": dt, "u1": traj.states[-1, 0], "u2": traj.states[-1, 1], "error": err})
    return rows


def continuum_ladder(
    ns: Sequence[int],
    seeds: int,
    seed: int = 0,
    kernel="product",
    g: Callable = lambda x: x,
    coupling: CouplingSpec = CouplingSpec("zero", "kuramoto"),
    T: float = 2.0,
    dt: float | None = None,
    reference: int = 1024,
    save_every: int = 16,
    threads: int = 1,
) -> list[dict]:
    """Distance between networks sampled at each ``n`` and the resolution-``reference`` continuum solution."""
    if dt is None:
        dt = default_dt(coupling, T)
    ref = solve_continuum(kernel, g, coupling, reference, T, dt, save_every)

    def point(n):
        Wn = project(kernel, n)
        gn = cell_average(g, n)
        dists = []
        for r in range(seeds):
            graph = sample_w_random(Wn, derive_seed(seed, n * 1_000_003 + r))
            traj = simulate(embed(graph), gn, coupling, T, dt, save_every)
            dists.append(trajectory_distance(traj, ref))
        return {"n": n, "median": float(np.median(dists)), "mean": float(np.mean(dists)), "max": float(np.max(dists))}

    return parallel_map(point, sorted(ns), threads)


def default_dt(coupling: CouplingSpec, T: float, kernel_bound: float = 1.0) -> float:
    """Largest step of the form ``T / 2^k`` that passes the stability guard."""
    limit = stable_dt(coupling, kernel_bound)
    dt = T
    while dt > limit:
        dt /= 2.0
    return dt


def _random_pair(rng: np.random.Generator, n: int):
    """Base data (U, g) and a perturbation (V, h) with random block structure and log-uniform sizes."""
    x = (np.arange(n) + 0.5) / n
    kb = int(rng.choice([2, 4, 8, 16, 32]))
    U = np.kron(rng.random((kb, kb)), np.ones((n // kb, n // kb)))
    kp = int(rng.choice([1, 2, 4, 8, 16, 32, n]))
    signs = np.kron(rng.choice([-1.0, 1.0], (kp, kp)), np.ones((n // kp, n // kp)))
    V = np.clip(U + 10 ** rng.uniform(-2.5, -0.7) * signs, 0.0, 1.0)
    g = rng.uniform(0.0, 0.5) * x
    coef = rng.normal(size=8)
    coef /= np.linalg.norm(coef)
    modes = np.array([np.cos(np.pi * (j + 1) * x) for j in range(8)])
    hh = g + 10 ** rng.uniform(-3.0, -0.7) * math.sqrt(2.0) * coef @ modes
    return StepGraphon(U), StepGraphon(V), GridFunction(g), GridFunction(hh)


def continuity_batches(
    n: int = 128,
    pairs: int = 50,
    batches: int = 2,
    seed: int = 0,
    coupling: CouplingSpec = CouplingSpec("zero", "kuramoto"),
    T: float = 1.0,
    dt: float | None = None,
    restarts: int = 8,
    threads: int = 1,
) -> list[dict]:
    """Ratios ``d(u, v) / (d_inf_one(U, V) + ||g - h||)`` over disjoint batches of random pairs.

    The kernel distance is the alternating-sign lower bound, so the
    reported ratios can only overstate the true ones.
    """
    if dt is None:
        dt = default_dt(coupling, T)

    def point(idx):
        b, k = divmod(idx, pairs)
        rng = np.random.default_rng(derive_seed(seed, idx))
        U, V, g, hh = _random_pair(rng, n)
        du = trajectory_distance(simulate(U, g, coupling, T, dt, 8), simulate(V, hh, coupling, T, dt, 8))
        dk = d_inf_one(U, V, "heuristic", restarts, 0)
        dg = l2_distance(g, hh)
        return {"batch": b, "pair": k, "traj_distance": du, "kernel_distance": dk, "initial_distance": dg,
                "ratio": du / (dk + dg)}

    return parallel_map(point, list(range(batches * pairs)), threads)


# ---------------------------------------------------------------------------
# large deviations


def bernoulli_rate_closed_form(v: float, w: float) -> float:
    return float(bernoulli_entropy(v, w))


def ldp_ladder(
    W_value: float = 0.5,
    V_value: float = 0.8,
    delta: float = 0.05,
    ns: Sequence[int] = (8, 16, 24),
    replicas: int = 10_000,
    seed: int = 0,
    restarts: int = 8,
    threads: int = 1,
) -> list[dict]:
    """Importance-sampling estimates of ``-(1/n^2) log P(d(H^n, V) <= delta)`` for constant W and V."""
    target = bernoulli_rate_closed_form(V_value, W_value)
    W, V = StepGraphon.constant(W_value), StepGraphon.constant(V_value)

    def point(n):
        est = estimate_rare_event(W, V, n, delta, "heuristic", replicas, derive_seed(seed, n), restarts)
        return {"n": n, "p_hat": est.p_hat, "std_err": est.std_err, "hits": est.hits,
                "rate_estimate": est.log_p_per_n2, "upsilon": target}

    return parallel_map(point, sorted(ns), threads)


def oracle_events(n: int, count: int = 10, seed: int = 0) -> list[tuple[StepGraphon, StepGraphon, float]]:
    """Deterministic list of (W, V_target, delta) triples for estimator-versus-enumeration checks."""
    rng = np.random.default_rng(derive_seed(seed, n))
    out = [(StepGraphon.constant(0.5, n), StepGraphon.constant(1.0, n), 0.0)]
    while len(out) < count:
        W = StepGraphon(rng.uniform(0.2, 0.8, (n, n)))
        V = StepGraphon(rng.uniform(0.1, 0.9, (n, n)))
        out.append((W, V, float(rng.choice([0.1, 0.2, 0.3, 0.5]))))
    return out


def ldp_oracle_rows(ns=(2, 3), count: int = 10, replicas: int = 10_000, seed: int = 0, restarts: int = 8) -> list[dict]:
    rows = []
    for n in ns:
        for k, (W, V, delta) in enumerate(oracle_events(n, count, seed)):
            est = estimate_rare_event(W, V, n, delta, "heuristic", replicas, derive_seed(seed, 100 * n + k), restarts)
            exact = exact_event_probability(W, ball_predicate(V, delta, "heuristic", restarts, 0))
            rows.append({"n": n, "event": k, "delta": delta, "p_hat": est.p_hat, "std_err": est.std_err,
                         "exact": exact, "z": (est.p_hat - exact) / est.std_err if est.std_err > 0 else 0.0})
    return rows


def bernstein_table(
    Ns: Sequence[int] = (100, 1000),
    deltas: Sequence[float] = (0.05, 0.1, 0.2),
    replicas: int = 100_000,
    seed: int = 0,
    chunk: int = 25_000,
) -> list[dict]:
    """Empirical tails of ``(1/N) sum (Z_i - m_i)`` against ``exp(-N h(delta))`` for 0/1 summands.

    ``iid``: Bernoulli(1/2).  ``markov``: ``P(Z_i = 1 | past) = 0.3 + 0.4 Z_{i-1}``,
    so the conditional mean ``m_i`` depends on the previous draw.
    """
    rows = []
    for N in Ns:
        rng = np.random.default_rng(derive_seed(seed, N))
        iid = (rng.binomial(N, 0.5, size=replicas) - 0.5 * N) / N
        markov = np.empty(replicas)
        for start in range(0, replicas, chunk):
            m = min(chunk, replicas - start)
            prev = (rng.random(m) < 0.5).astype(float)
            acc = prev - 0.5
            for _ in range(N - 1):
                p = 0.3 + 0.4 * prev
                z = (rng.random(m) < p).astype(float)
                acc += z - p
                prev = z
            markov[start : start + m] = acc / N
        for kind, means in (("iid", iid), ("markov", markov)):
            for d in deltas:
                freq = float(np.mean(means >= d))
                bound = math.exp(-N * float(h(d)))
                rows.append({"kind": kind, "N": N, "delta": d, "frequency": freq, "bound": bound,
                             "holds": freq <= bound})
    return rows


def rate_table(V: StepGraphon, W: StepGraphon) -> list[dict]:
    rows = [{"functional": "upsilon", "value": upsilon(V, W).value, "mode": "exact"}]
    q = rate_quotient(V, W, "exact" if V.n <= 8 else "heuristic")
    rows.append({"functional": "quotient", "value": q.value, "mode": q.mode})
    rows.append({"functional": "sparse", "value": sparse_rate(V, W).value, "mode": "exact"})
    return rows


# ---------------------------------------------------------------------------
# staircase


def staircase_rows(count: int = 50, k_max: int = 32, seed: int = 0) -> list[dict]:
    rows = []
    for idx in range(count):
        rng = np.random.default_rng(derive_seed(seed, idx))
        nu = random_coupling(32, rng, sparsity=0.5 if idx % 2 else 0.0)
        theta = staircase_bijection(nu)
        for row in staircase_convergence(nu):
            rows.append({"coupling": idx, "level": row.level, "k": row.k, "weak_distance": row.distance,
                         "segments": len(theta.segments)})
    return rows
