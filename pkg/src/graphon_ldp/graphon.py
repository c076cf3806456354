"""Step graphons, cell projection and the cut / infinity-to-one distances.

A step graphon at resolution ``n`` is stored as its ``n x n`` array of cell
values; cell ``(i, j)`` is ``[i/n, (i+1)/n) x [j/n, (j+1)/n)``.  All norms
are the normalized ones, i.e. ``(1/n^2) * a^T K b``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np

EXACT_NORM_MAX_N = 22
EXACT_QUOTIENT_MAX_N = 8
REFINEMENT_CAP = 2048
QUADRATURE_ORDER = 4

Kernel = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StepGraphon:
    """Piecewise-constant kernel on the uniform ``n x n`` grid of the unit square.

    ``upper_bound`` is 1 for ordinary graphons and ``1/alpha`` for rescaled
    sparse empirical graphons.
    """

    values: np.ndarray
    upper_bound: float = 1.0

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1] or vals.shape[0] == 0:
            raise ValueError(f"graphon values must be a non-empty square array, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("graphon values must be finite")
        if vals.min() < 0.0 or vals.max() > self.upper_bound * (1 + 1e-12):
            raise ValueError(
                f"graphon values must lie in [0, {self.upper_bound}], "
                f"got range [{vals.min()}, {vals.max()}]"
            )
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "upper_bound", float(self.upper_bound))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def constant(cls, c: float, n: int = 1) -> "StepGraphon":
        return cls(np.full((n, n), float(c)), upper_bound=max(1.0, float(c)))

    def refine(self, m: int) -> "StepGraphon":
        """Same function on the finer grid of ``m`` cells (``n`` must divide ``m``)."""
        if m % self.n:
            raise ValueError(f"cannot refine resolution {self.n} to {m}")
        r = m // self.n
        return StepGraphon(np.kron(self.values, np.ones((r, r))), self.upper_bound)

    def permuted(self, sigma) -> "StepGraphon":
        """Relabel cells: ``f_sigma[i, j] = f[sigma[i], sigma[j]]``."""
        sigma = check_permutation(sigma, self.n)
        return StepGraphon(self.values[np.ix_(sigma, sigma)], self.upper_bound)

    def __sub__(self, other: "StepGraphon") -> "SignedStepKernel":
        m = common_resolution(self.n, other.n)
        return SignedStepKernel(self.refine(m).values - other.refine(m).values)

    def __eq__(self, other):
        if not isinstance(other, StepGraphon):
            return NotImplemented
        return self.upper_bound == other.upper_bound and np.array_equal(self.values, other.values)

    __hash__ = None

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        i = np.minimum((x * self.n).astype(int), self.n - 1)
        j = np.minimum((y * self.n).astype(int), self.n - 1)
        return self.values[i, j]


@dataclass(frozen=True, eq=False)
class SignedStepKernel:
    """Difference of two step graphons at a common resolution."""

    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1] or vals.shape[0] == 0:
            raise ValueError(f"kernel values must be a non-empty square array, got {vals.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def check_permutation(sigma, n: int | None = None) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.intp)
    if sigma.ndim != 1:
        raise ValueError("a permutation is a one-dimensional index array")
    if n is not None and sigma.size != n:
        raise ValueError(f"permutation has length {sigma.size}, expected {n}")
    if not np.array_equal(np.sort(sigma), np.arange(sigma.size)):
        raise ValueError("mapping is not a bijection on {0..n-1}")
    return sigma


def common_resolution(n: int, m: int, cap: int = REFINEMENT_CAP) -> int:
    k = math.lcm(n, m)
    if k > cap:
        raise ValueError(f"common refinement of {n} and {m} has {k} cells, above the cap {cap}")
    return k


def _as_matrix(K) -> np.ndarray:
    if isinstance(K, (SignedStepKernel, StepGraphon)):
        return np.asarray(K.values, dtype=float)
    M = np.asarray(K, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("kernel must be square")
    return M


# ---------------------------------------------------------------------------
# named kernels and projection


def kernel_from_spec(spec: str) -> Union[Kernel, StepGraphon]:
    """Resolve a registry string (``constant:<c>``, ``product``, ``er:<p>``) or a step file."""
    name, _, arg = spec.partition(":")
    if name == "product":
        return lambda x, y: x * y
    if name in ("constant", "er"):
        try:
            c = float(arg)
        except ValueError:
            raise ValueError(f"bad kernel parameter in {spec!r}") from None
        if not 0.0 <= c <= 1.0:
            raise ValueError(f"kernel value {c} outside [0, 1]")
        # a 1x1 step graphon projects exactly to every resolution
        return StepGraphon.constant(c, 1)
    from .io import read_graphon

    return read_graphon(spec)


def _overlap(m: int, n: int) -> np.ndarray:
    """``P[i, k] = n * |Q^n_i  intersect  Q^m_k|`` so that ``P @ v`` averages onto n cells."""
    lo = np.maximum.outer(np.arange(n) / n, np.arange(m) / m)
    hi = np.minimum.outer(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    return n * np.clip(hi - lo, 0.0, None)


def project(kernel, n: int) -> StepGraphon:
    """Cell averages of ``kernel`` over the ``n x n`` grid.

    Step graphons are averaged exactly; callables are integrated with a
    tensor Gauss-Legendre rule of order 4 per axis in every cell.
    """
    if n < 1:
        raise ValueError("resolution must be positive")
    if isinstance(kernel, str):
        kernel = kernel_from_spec(kernel)
    if isinstance(kernel, StepGraphon):
        m = kernel.n
        if m == n:
            return kernel
        if m % n == 0:
            r = m // n
            vals = kernel.values.reshape(n, r, n, r).mean(axis=(1, 3))
        elif n % m == 0:
            return kernel.refine(n)
        else:
            P = _overlap(m, n)
            vals = P @ kernel.values @ P.T
        return StepGraphon(np.clip(vals, 0.0, kernel.upper_bound), kernel.upper_bound)

    nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_ORDER)
    # points in cell i: (i + (node+1)/2) / n
    pts = (np.arange(n)[:, None] + (nodes[None, :] + 1) / 2) / n
    x = pts.reshape(-1)
    vals = np.asarray(kernel(x[:, None], x[None, :]), dtype=float)
    vals = np.broadcast_to(vals, (x.size, x.size))
    if vals.min() < 0.0 or vals.max() > 1.0:
        raise ValueError("kernel reports values outside [0, 1]")
    w = weights / 2
    vals = vals.reshape(n, QUADRATURE_ORDER, n, QUADRATURE_ORDER)
    avg = np.einsum("iajb,a,b->ij", vals, w, w)
    return StepGraphon(np.clip(avg, 0.0, 1.0))


# ---------------------------------------------------------------------------
# norms


def _sign_vectors(n: int, start: int, stop: int) -> np.ndarray:
    """Sign vectors with first coordinate +1, indexed by the bits of start..stop-1."""
    idx = np.arange(start, stop, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n - 1, dtype=np.int64)) & 1
    out = np.ones((idx.size, n))
    out[:, 1:] = 1.0 - 2.0 * bits
    return out


def _indicator_vectors(n: int, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(float)


_CHUNK = 1 << 15


def _exact_inf_one(M: np.ndarray) -> float:
    n = M.shape[0]
    if n > EXACT_NORM_MAX_N:
        raise ValueError(f"exact norm limited to n <= {EXACT_NORM_MAX_N}, got {n}")
    best = 0.0
    total = 1 << (n - 1)
    for start in range(0, total, _CHUNK):
        A = _sign_vectors(n, start, min(total, start + _CHUNK))
        # optimal b is sign(column sums); a and -a give the same value
        best = max(best, float(np.abs(A @ M).sum(axis=1).max()))
    return best / n**2


def _exact_cut(M: np.ndarray) -> float:
    n = M.shape[0]
    if n > EXACT_NORM_MAX_N:
        raise ValueError(f"exact norm limited to n <= {EXACT_NORM_MAX_N}, got {n}")
    best = 0.0
    total = 1 << n
    for start in range(0, total, _CHUNK):
        S = _indicator_vectors(n, start, min(total, start + _CHUNK))
        cols = S @ M
        pos = np.clip(cols, 0.0, None).sum(axis=1).max()
        neg = np.clip(-cols, 0.0, None).sum(axis=1).max()
        best = max(best, float(pos), float(neg))
    return best / n**2


def _signs(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0, -1.0)


def _heuristic_inf_one(M: np.ndarray, restarts: int, seed: int, max_iter: int = 200) -> float:
    n = M.shape[0]
    rng = np.random.default_rng(seed)
    if 1 << (n - 1) <= restarts + 1:
        # the start budget covers every sign vector, so every vertex is a start
        A = _sign_vectors(n, 0, 1 << (n - 1))
    else:
        # the all-ones start is always included so the constant test pair is seen
        A = np.vstack([np.ones((1, n)), _signs(rng.standard_normal((restarts, n)))])
    value = np.full(A.shape[0], -np.inf)
    for _ in range(max_iter):
        B = _signs(A @ M)
        A = _signs(B @ M.T)
        new = np.abs(A @ M).sum(axis=1)
        if np.all(new <= value):
            break
        value = np.maximum(value, new)
    return float(value.max()) / n**2


def _heuristic_cut(M: np.ndarray, restarts: int, seed: int, max_iter: int = 200) -> float:
    n = M.shape[0]
    rng = np.random.default_rng(seed)
    best = 0.0
    for sgn in (1.0, -1.0):
        K = sgn * M
        if 1 << n <= restarts + 1:
            S = _indicator_vectors(n, 0, 1 << n)
        else:
            S = np.vstack([np.ones((1, n)), (rng.random((restarts, n)) < 0.5).astype(float)])
        value = np.full(S.shape[0], -np.inf)
        for _ in range(max_iter):
            T = (S @ K > 0).astype(float)
            S = (T @ K.T > 0).astype(float)
            new = np.clip(S @ K, 0.0, None).sum(axis=1)
            if np.all(new <= value):
                break
            value = np.maximum(value, new)
        best = max(best, float(value.max()))
    return best / n**2


def _check_mode(mode: str, restarts: int):
    if mode not in ("exact", "heuristic"):
        raise ValueError(f"unknown norm mode {mode!r}")
    if mode == "heuristic" and restarts < 1:
        raise ValueError("heuristic mode needs at least one restart")


def inf_one_norm(K, mode: str = "exact", restarts: int = 16, seed: int = 0) -> float:
    """Normalized infinity-to-one norm ``max (1/n^2) a^T K b`` over ``a, b`` in ``[-1, 1]^n``.

    ``exact`` enumerates the ``2^(n-1)`` sign vectors (n <= 22).  ``heuristic``
    runs alternating sign maximization from the all-ones vector plus
    ``restarts`` random sign vectors and returns the best feasible value,
    which is a lower bound on the exact norm.  When ``restarts + 1`` covers
    all sign vectors, every vertex is used as a start instead.
    """
    _check_mode(mode, restarts)
    M = _as_matrix(K)
    if mode == "exact":
        return _exact_inf_one(M)
    return _heuristic_inf_one(M, restarts, seed)


def cut_norm(K, mode: str = "exact", restarts: int = 16, seed: int = 0) -> float:
    """Normalized cut norm ``max |sum_{S x T} K| / n^2`` over cell subsets.

    Same exact / heuristic semantics as :func:`inf_one_norm`.
    """
    _check_mode(mode, restarts)
    M = _as_matrix(K)
    if mode == "exact":
        return _exact_cut(M)
    return _heuristic_cut(M, restarts, seed)


def d_inf_one(f: StepGraphon, g: StepGraphon, mode: str = "exact", restarts: int = 16, seed: int = 0) -> float:
    return inf_one_norm(f - g, mode=mode, restarts=restarts, seed=seed)


class QuotientDistance(NamedTuple):
    distance: float
    permutation: np.ndarray
    exact: bool


def _exact_inf_one_batch(D: np.ndarray, A: np.ndarray) -> np.ndarray:
    # D: (p, n, n), A: (s, n) -> (p,)
    cols = np.einsum("si,pij->psj", A, D)
    return np.abs(cols).sum(axis=2).max(axis=1)


def _all_permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)


def _swap_search(objective, sigma: np.ndarray, sweeps: int, rng) -> tuple[np.ndarray, float]:
    sigma = sigma.copy()
    best = objective(sigma)
    n = sigma.size
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for _ in range(sweeps):
        improved = False
        for k in rng.permutation(len(pairs)):
            i, j = pairs[k]
            sigma[i], sigma[j] = sigma[j], sigma[i]
            val = objective(sigma)
            if val < best - 1e-15:
                best = val
                improved = True
            else:
                sigma[i], sigma[j] = sigma[j], sigma[i]
        if not improved:
            break
    return sigma, best


def degree_matching(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Permutation aligning the degree order of ``f`` with that of ``g``."""
    deg_f = f.sum(axis=0) + f.sum(axis=1)
    deg_g = g.sum(axis=0) + g.sum(axis=1)
    sigma = np.empty(f.shape[0], dtype=np.intp)
    sigma[np.argsort(deg_g, kind="stable")] = np.argsort(deg_f, kind="stable")
    return sigma


def permutation_search(objective, f: np.ndarray, g: np.ndarray, sweeps: int, seed: int):
    """Swap local search from the degree-matched and identity starts; returns (sigma, value)."""
    rng = np.random.default_rng(seed)
    n = f.shape[0]
    best_sigma, best_val = None, np.inf
    for start in (degree_matching(f, g), np.arange(n)):
        sigma, val = _swap_search(objective, start, sweeps, rng)
        if val < best_val:
            best_sigma, best_val = sigma, val
    return best_sigma, best_val


def delta_inf_one(
    f: StepGraphon,
    g: StepGraphon,
    mode: str = "exact",
    sweeps: int = 4,
    seed: int = 0,
    restarts: int = 16,
) -> QuotientDistance:
    """Quotient distance ``min_sigma d(f_sigma, g)`` over cell permutations.

    ``exact`` enumerates all ``n!`` permutations (n <= 8).  ``heuristic``
    starts from degree matching, runs pairwise-swap local search and
    returns the distance at the best permutation found, an upper bound on
    the permutation minimum whenever the norm itself is evaluated exactly
    (n <= 22); beyond that the norm is the alternating-sign lower bound and
    ``exact`` is False with no bound guarantee.
    """
    m = common_resolution(f.n, g.n)
    F, G = f.refine(m).values, g.refine(m).values
    if mode == "exact":
        if m > EXACT_QUOTIENT_MAX_N:
            raise ValueError(f"exact quotient distance limited to n <= {EXACT_QUOTIENT_MAX_N}, got {m}")
        perms = _all_permutations(m)
        A = _sign_vectors(m, 0, 1 << (m - 1))
        best_val, best_sigma = np.inf, None
        for start in range(0, len(perms), 2048):
            P = perms[start : start + 2048]
            D = F[P[:, :, None], P[:, None, :]] - G
            vals = _exact_inf_one_batch(D, A)
            k = int(np.argmin(vals))
            if vals[k] < best_val:
                best_val, best_sigma = float(vals[k]), P[k].copy()
        return QuotientDistance(best_val / m**2, best_sigma, True)
    if mode != "heuristic":
        raise ValueError(f"unknown mode {mode!r}")

    inner = "exact" if m <= 10 else "heuristic"

    def objective(sigma):
        return inf_one_norm(F[np.ix_(sigma, sigma)] - G, mode=inner, restarts=restarts, seed=seed)

    sigma, val = permutation_search(objective, F, G, sweeps, seed)
    exact_eval = m <= EXACT_NORM_MAX_N
    if inner != "exact" and exact_eval:
        val = inf_one_norm(F[np.ix_(sigma, sigma)] - G, mode="exact")
    return QuotientDistance(float(val), sigma, False)
