"""Measure-preserving bijections built from couplings with uniform marginals.

Given block masses ``m[i, j]`` of a coupling on the ``k x k`` grid (x index
``i``, y index ``j``), the staircase map places one diagonal segment of
length ``m[i, j]`` inside every block.  Within x-column ``i`` the segments
are stacked in order of ``j``; within y-row ``j`` they are stacked in order
of ``i``.  Because every row and column of ``m`` sums to ``1/k`` both
projections tile ``[0, 1)`` and the resulting piecewise translation is a
measure-preserving bijection carrying exactly the mass ``m[i, j]`` into
block ``(i, j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

MARGINAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteCoupling:
    masses: np.ndarray

    def __post_init__(self):
        m = np.array(self.masses, dtype=float, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ValueError("coupling masses must be a non-empty square array")
        if m.min() < 0:
            raise ValueError("coupling masses must be nonnegative")
        k = m.shape[0]
        if (np.abs(m.sum(axis=1) - 1 / k).max() > MARGINAL_TOL
                or np.abs(m.sum(axis=0) - 1 / k).max() > MARGINAL_TOL):
            raise ValueError("coupling marginals are not uniform")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @property
    def k(self) -> int:
        return self.masses.shape[0]

    @classmethod
    def diagonal(cls, k: int) -> "DiscreteCoupling":
        return cls(np.eye(k) / k)

    @classmethod
    def uniform(cls, k: int) -> "DiscreteCoupling":
        return cls(np.full((k, k), 1.0 / k**2))

    def refine(self, factor: int) -> "DiscreteCoupling":
        """Split each block into ``factor^2`` equal sub-blocks (uniform density inside blocks)."""
        return DiscreteCoupling(np.kron(self.masses, np.ones((factor, factor))) / factor**2)

    def coarsen(self, k: int) -> "DiscreteCoupling":
        if self.k % k:
            raise ValueError(f"cannot coarsen {self.k} blocks to {k}")
        r = self.k // k
        return DiscreteCoupling(self.masses.reshape(k, r, k, r).sum(axis=(1, 3)))


class Segment(NamedTuple):
    start_x: float
    start_y: float
    length: float


@dataclass(frozen=True, eq=False)
class PiecewiseBijection:
    segments: list

    def __post_init__(self):
        segs = [Segment(*map(float, s)) for s in self.segments if s[2] > 0]
        object.__setattr__(self, "segments", segs)
        xs = np.array([s.start_x for s in segs])
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_ys", np.array([s.start_y for s in segs]))
        object.__setattr__(self, "_ls", np.array([s.length for s in segs]))
        object.__setattr__(self, "_order", np.argsort(xs, kind="stable"))

    def check(self, tol: float = 1e-12) -> None:
        """Raise if lengths do not sum to one or either projection fails to tile [0, 1)."""
        if abs(math.fsum(self._ls) - 1.0) > tol:
            raise AssertionError(f"segment lengths sum to {math.fsum(self._ls)!r}")
        for starts, axis in ((self._xs, "x"), (self._ys, "y")):
            order = np.argsort(starts, kind="stable")
            s, l = starts[order], self._ls[order]
            ends = s + l
            if abs(s[0]) > tol or abs(ends[-1] - 1.0) > tol or np.abs(s[1:] - ends[:-1]).max(initial=0) > tol:
                raise AssertionError(f"{axis}-projections do not tile [0, 1)")


def coupling_from_samples(pairs, k: int, tol: float = 1e-10, max_iter: int = 10_000) -> DiscreteCoupling:
    """Bin points of the unit square into ``k x k`` blocks and rescale to uniform marginals."""
    pts = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("need at least one sample")
    idx = np.minimum((np.clip(pts, 0.0, 1.0) * k).astype(int), k - 1)
    m = np.zeros((k, k))
    np.add.at(m, (idx[:, 0], idx[:, 1]), 1.0)
    if (m.sum(axis=1) == 0).any() or (m.sum(axis=0) == 0).any():
        raise ValueError("an empty row or column of blocks cannot be given uniform marginals")
    m /= m.sum()
    target = 1.0 / k
    for _ in range(max_iter):
        m *= (target / m.sum(axis=1))[:, None]
        m *= (target / m.sum(axis=0))[None, :]
        if np.abs(m.sum(axis=1) - target).max() < tol:
            break
    else:
        raise ValueError("marginal rescaling did not converge")
    # final exact-ish repair for the 1e-12 invariant
    m *= (target / m.sum(axis=0))[None, :]
    return DiscreteCoupling(m)


def random_coupling(k: int, rng: np.random.Generator, sparsity: float = 0.0) -> DiscreteCoupling:
    """Random coupling with uniform marginals.

    Dense couplings scale a positive random matrix to uniform marginals.
    With ``sparsity > 0`` the coupling is a random convex combination of
    about ``(1 - sparsity) k`` permutation matrices, which has exact marginals
    and roughly that fraction of empty blocks.
    """
    if sparsity > 0:
        count = max(1, round((1.0 - sparsity) * k))
        weights = rng.dirichlet(np.ones(count))
        m = np.zeros((k, k))
        for w in weights:
            m[np.arange(k), rng.permutation(k)] += w / k
        return DiscreteCoupling(m)
    m = rng.exponential(size=(k, k))
    m /= m.sum()
    for _ in range(10_000):
        m *= (1.0 / k / m.sum(axis=1))[:, None]
        m *= (1.0 / k / m.sum(axis=0))[None, :]
        if np.abs(m.sum(axis=1) - 1.0 / k).max() < 1e-15:
            break
    return DiscreteCoupling(m)


def staircase_bijection(nu: DiscreteCoupling) -> PiecewiseBijection:
    k = nu.k
    m = nu.masses
    delta = 1.0 / k
    # x-offset of block (i, j): mass already used in column i by rows before j;
    # y-offset: mass already used in row j by columns before i
    x_off = np.cumsum(m, axis=1) - m
    y_off = np.cumsum(m, axis=0) - m
    segs = []
    for i in range(k):
        for j in range(k):
            if m[i, j] > 0:
                segs.append(Segment(i * delta + x_off[i, j], j * delta + y_off[i, j], m[i, j]))
    theta = PiecewiseBijection(segs)
    theta.check(tol=1e-12)
    return theta


def evaluate(theta: PiecewiseBijection, x) -> np.ndarray:
    """Image of ``x`` under the piecewise translation."""
    x = np.asarray(x, dtype=float)
    xs = theta._xs[theta._order]
    pos = np.searchsorted(xs, x, side="right") - 1
    if np.any(pos < 0):
        raise ValueError("point not covered by any segment")
    seg = theta._order[pos]
    offset = x - theta._xs[seg]
    if np.any(offset >= theta._ls[seg] + 1e-12):
        raise ValueError("point not covered by any segment")
    return theta._ys[seg] + offset


def pushforward_blocks(theta: PiecewiseBijection, k: int) -> np.ndarray:
    """Block masses of the coupling ``dx x delta_{theta(x)}`` on the ``k x k`` grid, exactly."""
    out = np.zeros((k, k))
    edges = np.arange(k + 1) / k
    for sx, sy, length in theta.segments:
        # split the segment where it crosses vertical or horizontal grid lines
        cuts = [np.array([0.0, length])]
        for start in (sx, sy):
            lo = np.searchsorted(edges, start, side="right")
            hi = np.searchsorted(edges, start + length, side="left")
            cuts.append(edges[lo:hi] - start)
        cuts = np.unique(np.concatenate(cuts))
        mids = 0.5 * (cuts[:-1] + cuts[1:])
        bi = np.minimum(((sx + mids) * k).astype(int), k - 1)
        bj = np.minimum(((sy + mids) * k).astype(int), k - 1)
        np.add.at(out, (bi, bj), np.diff(cuts))
    return out


# ---------------------------------------------------------------------------
# weak-topology surrogate


def _frequencies(count: int = 32) -> list[tuple[int, int]]:
    pairs = sorted(((p, q) for p in range(8) for q in range(8) if p + q > 0), key=lambda pq: (pq[0] + pq[1], pq[0]))
    return pairs[:count]


TEST_FREQUENCIES = _frequencies()


def _cos_block_means(freq: int, k: int) -> np.ndarray:
    """Average of ``cos(pi freq x)`` over each block ``[a/k, (a+1)/k)``."""
    if freq == 0:
        return np.ones(k)
    a = np.arange(k + 1) / k
    prim = np.sin(np.pi * freq * a) / (np.pi * freq)
    return np.diff(prim) * k


def moment_vector(masses: np.ndarray) -> np.ndarray:
    """Integrals of the product cosines against the block-uniform measure with these masses."""
    k = masses.shape[0]
    return np.array([_cos_block_means(p, k) @ masses @ _cos_block_means(q, k) for p, q in TEST_FREQUENCIES])


def weak_distance(nu_a, nu_b) -> float:
    """Max over 32 low-frequency product cosines of the difference of integrals.

    Each argument is a :class:`DiscreteCoupling` or a raw mass array, read as
    a measure with uniform density inside each block.  Integrals are exact,
    so the value equals the one obtained after refining both to a common grid.
    """
    ma = nu_a.masses if isinstance(nu_a, DiscreteCoupling) else np.asarray(nu_a, dtype=float)
    mb = nu_b.masses if isinstance(nu_b, DiscreteCoupling) else np.asarray(nu_b, dtype=float)
    return float(np.abs(moment_vector(ma) - moment_vector(mb)).max())


class ConvergenceRow(NamedTuple):
    level: int
    k: int
    distance: float


def staircase_convergence(nu: DiscreteCoupling, levels=range(1, 6), audit_factor: int = 4) -> list[ConvergenceRow]:
    """Weak distance between ``nu`` and the staircase built at ``k = 2^level`` blocks.

    The staircase of the coarsened (or refined) coupling is audited on a grid
    ``audit_factor`` times finer than both ``nu`` and the construction.
    """
    rows = []
    for level in levels:
        k = 2**level
        if nu.k % k == 0:
            approx = nu.coarsen(k)
        elif k % nu.k == 0:
            approx = nu.refine(k // nu.k)
        else:
            raise ValueError(f"coupling resolution {nu.k} and 2^{level} are not nested")
        theta = staircase_bijection(approx)
        fine = math.lcm(nu.k, k) * audit_factor
        rows.append(ConvergenceRow(level, k, weak_distance(nu, pushforward_blocks(theta, fine))))
    return rows
