"""Seeded W-random graph samplers, empirical graphons and random initial data.

Every sampler is a pure function of its inputs and an integer seed.  Replica
``r`` of a Monte Carlo run uses :func:`derive_seed` so that replicas are
reproducible no matter how they are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .graphon import QUADRATURE_ORDER, StepGraphon, check_permutation


def derive_seed(seed: int, replica: int) -> int:
    """Independent 64-bit stream seed for ``replica`` under the base ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class AdjacencyGraph:
    bits: np.ndarray
    directed: bool = True
    alpha: float = 1.0
    seed: int = 0
    source: str = ""

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8, copy=True)
        if bits.ndim != 2 or bits.shape[0] != bits.shape[1]:
            raise ValueError("adjacency must be square")
        if bits.max(initial=0) > 1:
            raise ValueError("adjacency entries must be 0 or 1")
        if not self.directed and not np.array_equal(bits, bits.T):
            raise ValueError("undirected adjacency must be symmetric")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-constant function on [0, 1] with ``n`` equal cells."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if vals.size == 0:
            raise ValueError("grid function needs at least one cell")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size

    def refine(self, m: int) -> "GridFunction":
        if m % self.n:
            raise ValueError(f"cannot refine {self.n} cells to {m}")
        return GridFunction(np.repeat(self.values, m // self.n))

    def coarsen(self, n: int) -> "GridFunction":
        if self.n % n:
            raise ValueError(f"cannot average {self.n} cells onto {n}")
        return GridFunction(self.values.reshape(n, -1).mean(axis=1))

    def permuted(self, sigma) -> "GridFunction":
        return GridFunction(self.values[check_permutation(sigma, self.n)])


def l2_distance(a: GridFunction, b: GridFunction) -> float:
    m = math.lcm(a.n, b.n)
    diff = a.refine(m).values - b.refine(m).values
    return float(np.sqrt(np.mean(diff**2)))


def cell_average(g: Callable[[np.ndarray], np.ndarray], n: int) -> GridFunction:
    """``n * int_{Q_i} g`` by Gauss-Legendre quadrature of order 4 per cell."""
    nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_ORDER)
    x = (np.arange(n)[:, None] + (nodes[None, :] + 1) / 2) / n
    vals = np.broadcast_to(np.asarray(g(x), dtype=float), x.shape)
    return GridFunction(vals @ (weights / 2))


# ---------------------------------------------------------------------------
# graph samplers


def _bernoulli(probs: np.ndarray, rng: np.random.Generator, directed: bool) -> np.ndarray:
    u = rng.random(probs.shape)
    bits = (u < probs).astype(np.uint8)
    if not directed:
        upper = np.triu(bits)
        bits = upper | np.triu(upper, 1).T
    return bits


def sample_w_random(Wn: StepGraphon, seed: int, directed: bool = True) -> AdjacencyGraph:
    """Independent Bernoulli(W_ij) edges over all ordered pairs, self-pairs included.

    Undirected graphs draw the upper triangle (with diagonal) and mirror it.
    """
    if Wn.upper_bound != 1.0 or Wn.values.max() > 1.0:
        raise ValueError("sampling kernel must take values in [0, 1]")
    rng = np.random.default_rng(seed)
    bits = _bernoulli(Wn.values, rng, directed)
    return AdjacencyGraph(bits, directed=directed, alpha=1.0, seed=int(seed), source=f"W(n={Wn.n})")


def sample_sparse(Wn: StepGraphon, alpha: float, seed: int, directed: bool = True) -> AdjacencyGraph:
    """Bernoulli(alpha * W_ij) edges; ``alpha`` is recorded for rescaling."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    probs = alpha * Wn.values
    if probs.max() > 1.0:
        raise ValueError("alpha * W exceeds 1 somewhere")
    rng = np.random.default_rng(seed)
    bits = _bernoulli(probs, rng, directed)
    return AdjacencyGraph(bits, directed=directed, alpha=float(alpha), seed=int(seed), source=f"W(n={Wn.n})")


def log_likelihood_ratio(bits: np.ndarray, V: np.ndarray, W: np.ndarray) -> float:
    """``log dmu_W / dmu_V`` at ``bits`` for product Bernoulli measures.

    Cells whose drawn symbol has zero probability under ``W`` but not under
    ``V`` give ``-inf``.  Symbols impossible under ``V`` never occur in a
    ``V``-sample and are not handled.
    """
    x = np.asarray(bits, dtype=bool)
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        one = np.log(W) - np.log(V)
        zero = np.log1p(-W) - np.log1p(-V)
        terms = np.where(x, one, zero)
    # symbol probability zero under both measures: 0 log(0/0) = 0
    both_zero = np.where(x, (V == 0) & (W == 0), (V == 1) & (W == 1))
    terms = np.where(both_zero, 0.0, terms)
    return float(terms.sum())


class TiltedSample(NamedTuple):
    graph: AdjacencyGraph
    log_weight: float


def sample_tilted(Vn: StepGraphon, Wn: StepGraphon, seed: int) -> TiltedSample:
    """Draw from the product measure of ``Vn`` and return the log importance weight dmu_W/dmu_V."""
    if Vn.n != Wn.n:
        raise ValueError("tilting and base kernels must share a resolution")
    g = sample_w_random(Vn, seed)
    return TiltedSample(g, log_likelihood_ratio(g.bits, Vn.values, Wn.values))


def embed(g: AdjacencyGraph, rescale: bool = False) -> StepGraphon:
    """Empirical graphon of ``g``; ``rescale`` divides by ``alpha`` (bound ``1/alpha``)."""
    bits = g.bits.astype(float)
    if rescale and g.alpha != 1.0:
        return StepGraphon(bits / g.alpha, upper_bound=1.0 / g.alpha)
    return StepGraphon(bits)


# ---------------------------------------------------------------------------
# initial data and node parameters


@dataclass(frozen=True)
class FiniteLaw:
    """Probability law with finitely many atoms."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        s = tuple(float(x) for x in self.support)
        p = tuple(float(x) for x in self.probs)
        if len(s) != len(p) or not s:
            raise ValueError("support and probabilities must be non-empty and equally long")
        if any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to one")
        if not all(np.isfinite(s)):
            raise ValueError("law must have bounded support")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, atoms: Sequence[float]) -> "FiniteLaw":
        return cls(tuple(atoms), tuple([1.0 / len(atoms)] * len(atoms)))

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    @property
    def bound(self) -> float:
        return float(max(abs(x) for x in self.support))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.choice(np.array(self.support), size=size, p=np.array(self.probs))


def bump_weights(rho: float, cells: int) -> np.ndarray:
    """Discrete unit-mass smooth bump of half-width ``rho`` on a periodic grid of ``cells``.

    Returned as a length-``cells`` circular filter centred at index 0.
    """
    k = np.arange(cells)
    offs = np.minimum(k, cells - k) / cells
    z = offs / rho
    w = np.zeros(cells)
    inside = z < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    if w.sum() == 0.0:
        w[0] = 1.0
    return w / w.sum()


def _convolved_fine(mu: FiniteLaw, rho: float, cells: int, rng) -> np.ndarray:
    h = mu.sample(rng, cells)
    w = bump_weights(rho, cells)
    return np.real(np.fft.ifft(np.fft.fft(h) * np.fft.fft(w)))


def _lipschitz_fine(M: float, cells: int, rng) -> np.ndarray:
    # our choice of law: uniform-increment walk, slope <= M per step
    steps = rng.uniform(-M / cells, M / cells, size=cells)
    path = rng.uniform(-1.0, 1.0) + np.concatenate([[0.0], np.cumsum(steps)])
    # cell averages of the linear interpolant
    return 0.5 * (path[:-1] + path[1:])


class InitialCondition(NamedTuple):
    fine: GridFunction
    coarse: GridFunction


def make_initial_condition(
    kind: str,
    n: int,
    *,
    g: Callable | None = None,
    M: float | None = None,
    mu: FiniteLaw | None = None,
    rho: float | None = None,
    seed: int = 0,
    fine_cells: int | None = None,
) -> InitialCondition:
    """Random or deterministic initial data at a fine resolution and its ``n``-cell averages.

    ``deterministic`` averages ``g``; ``lipschitz`` draws an ``M``-Lipschitz
    path; ``convolved`` smooths ``n^2`` iid draws of ``mu`` with a bump of
    half-width ``rho``.  ``fine_cells`` defaults to ``n^2`` for the
    convolved kind and ``max(1024, 16 n)`` otherwise (rounded to a multiple of ``n``).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if kind == "convolved":
        if mu is None or rho is None:
            raise ValueError("convolved initial data needs mu and rho")
        if rho <= 0:
            raise ValueError("rho must be positive")
        cells = fine_cells or n * n
    else:
        cells = fine_cells or max(1024, 16 * n)
        cells = -(-cells // n) * n
    if cells % n:
        raise ValueError("fine resolution must be a multiple of n")
    rng = np.random.default_rng(seed)
    if kind == "deterministic":
        if g is None:
            raise ValueError("deterministic initial data needs g")
        fine = cell_average(g, cells)
    elif kind == "lipschitz":
        if M is None or M < 0:
            raise ValueError("lipschitz initial data needs M >= 0")
        fine = GridFunction(_lipschitz_fine(float(M), cells, rng))
    elif kind == "convolved":
        fine = GridFunction(_convolved_fine(mu, float(rho), cells, rng))
    else:
        raise ValueError(f"unknown initial-condition kind {kind!r}")
    return InitialCondition(fine, fine.coarsen(n))


def make_parameters(mu: FiniteLaw, n: int, seed: int, rho: float = 0.05) -> GridFunction:
    """Node parameters (e.g. natural frequencies) with the convolved mechanics."""
    return make_initial_condition("convolved", n, mu=mu, rho=rho, seed=seed).coarse
