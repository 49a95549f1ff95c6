"""Independent brute-force references used to validate the fast paths.

Nothing here shares code with :mod:`reglab.maximal_ops` beyond the summation
convention, which the oracle re-derives from scratch: every center is
compared against every cell of the grid, ball counts come from explicit
lattice enumeration, and the radius set is built from all pairwise
center distances.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def pairwise_d2_levels(shape) -> np.ndarray:
    """Distinct squared center distances (cell units) between any two cells."""
    cells = np.array(list(itertools.product(*[range(s) for s in shape])), dtype=np.int64)
    levels = set()
    for c in cells:
        levels.update(np.sum((cells - c) ** 2, axis=1).tolist())
    return np.array(sorted(levels), dtype=np.int64)


def lattice_count(d2: int, n: int) -> int:
    """Number of integer points v in Z^n with |v|^2 <= d2."""
    reach = math.isqrt(d2)
    pts = np.array(list(itertools.product(range(-reach, reach + 1), repeat=n)), dtype=np.int64)
    return int(np.count_nonzero(np.sum(pts**2, axis=1) <= d2))


class MaximalOracle:
    """Exhaustive ball averages for every center and every radius of a field."""

    def __init__(self, f: np.ndarray, h: float):
        f = np.abs(np.asarray(f, dtype=float))
        self.shape = f.shape
        self.h = float(h)
        n = f.ndim
        self.levels = pairwise_d2_levels(f.shape)
        self.radii = np.array([0.5 * h if d == 0 else h * math.sqrt(d) for d in self.levels.tolist()])
        self.counts = np.array([float(lattice_count(int(d), n)) for d in self.levels.tolist()])
        index = np.full(int(self.levels[-1]) + 1, -1, dtype=np.int64)
        index[self.levels] = np.arange(len(self.levels))
        cells = np.array(list(np.ndindex(*f.shape)), dtype=np.int64)
        flat = f.ravel()
        K = len(self.levels)
        self.sums = np.zeros((len(cells), K))
        for c, x in enumerate(cells):
            d2 = np.sum((cells - x) ** 2, axis=1)
            shell = index[d2]
            buf = np.zeros(K)
            np.add.at(buf, shell, flat)  # sequential, cell order
            acc = 0.0
            for k in range(K):
                acc = acc + buf[k]
                self.sums[c, k] = acc

    def evaluate(self, alpha: float = 0.0, rmin: float | None = None, rmax: float | None = None) -> np.ndarray:
        """max over radii rmin <= rho < rmax of rho^alpha * (ball sum / ball count)."""
        keep = np.ones(len(self.radii), dtype=bool)
        if rmin is not None:
            keep &= self.radii >= rmin
        if rmax is not None:
            keep &= self.radii < rmax
        ks = np.flatnonzero(keep)
        if len(ks) == 0:
            return np.zeros(self.shape)
        # elementwise IEEE products and quotients, then an exact max
        w = np.array([math.pow(self.radii[k], alpha) for k in ks.tolist()])
        vals = w[None, :] * (self.sums[:, ks] / self.counts[ks][None, :])
        return np.maximum(vals.max(axis=1), 0.0).reshape(self.shape)

    def averages_fsum(self, center, k: int, f: np.ndarray) -> float:
        """Compensated-sum ball average, for a rounding-independent cross-check."""
        cells = np.array(list(np.ndindex(*self.shape)), dtype=np.int64)
        d2 = np.sum((cells - np.asarray(center)) ** 2, axis=1)
        vals = np.abs(np.asarray(f, dtype=float)).ravel()[d2 <= self.levels[k]]
        return math.fsum(vals.tolist()) / self.counts[k]


def maximal_oracle(f, h, alpha=0.0, rmin=None, rmax=None) -> np.ndarray:
    return MaximalOracle(f, h).evaluate(alpha, rmin, rmax)


def radial_capacity(r: float, R: float, n: int = 2, p: float = 2.0) -> float:
    """Capacity of the closed ball B_r relative to B_R from the radial minimizer."""
    omega = n * math.pi ** (n / 2) / math.gamma(n / 2 + 1)  # surface area of the unit sphere
    if p == n:
        return omega * math.log(R / r) ** (1 - n)
    beta = (p - n) / (p - 1)
    return omega * abs((R**beta - r**beta) / beta) ** (1 - p)
