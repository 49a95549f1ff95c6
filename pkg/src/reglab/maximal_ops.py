"""Discrete Hardy-Littlewood, fractional and cut-off maximal operators.

Functions are cell arrays on an ambient grid of spacing ``h`` and are taken
to vanish outside it.  A discrete ball ``B_rho(x)`` is the set of cells whose
centers lie within ``rho`` of the cell center ``x`` (ties included); its
measure is its full lattice count times ``h^n``, cells beyond the array
included.  The radius set is ``{h/2}`` (the singleton ball) together with
every distinct positive center-to-center distance on the grid, so all
suprema are finite maxima:

    M_alpha f(x) = max_k  rho_k^alpha * S_k(x) / count_k,

with ``S_k`` the sum of ``|f|`` over the k-th ball.  ``S_k`` is accumulated
shell by shell (a shell is one distance level), each shell in row-major cell
order; the compiled kernel, the numpy fallback and the brute-force oracle
all follow this order, which makes their outputs identical to the bit.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .domain import AmbientField
from .errors import InvalidOrder, ValidationError

try:
    from . import _kernels
except ImportError:  # pragma: no cover - exercised when the extension is not built
    _kernels = None

_backend = "cython" if _kernels is not None and not os.environ.get("REGLAB_PURE_PYTHON") else "python"


def available_backends() -> tuple[str, ...]:
    return ("cython", "python") if _kernels is not None else ("python",)


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Select ``"cython"`` or ``"python"`` for the ball-sum kernel."""
    global _backend
    if name not in available_backends():
        raise ValidationError(f"backend {name!r} unavailable; have {available_backends()}")
    _backend = name


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("REGLAB_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RadiusTable:
    """Shells of a grid: squared radii (cell units), radii, cumulative ball counts."""

    d2: np.ndarray
    radii: np.ndarray
    count: np.ndarray
    lookup: np.ndarray
    h: float

    def __len__(self):
        return len(self.d2)

    def weights(self, alpha: float) -> np.ndarray:
        return _weights(self, alpha)


@lru_cache(maxsize=32)
def radius_table(shape: tuple[int, ...], h: float) -> RadiusTable:
    n = len(shape)
    axes = [np.arange(s, dtype=np.int64) ** 2 for s in shape]
    grid_d2 = axes[0]
    for a in axes[1:]:
        grid_d2 = np.add.outer(grid_d2, a)
    d2 = np.unique(grid_d2)
    cap = int(d2[-1])
    # representation counts r_n(m) for m <= cap over the full lattice
    reach = math.isqrt(cap)
    line = np.arange(-reach, reach + 1, dtype=np.int64) ** 2
    reps = np.zeros(cap + 1, dtype=np.int64)
    partial = line
    for _ in range(n - 1):
        partial = np.add.outer(partial, line).ravel()
        partial = partial[partial <= cap]
    reps += np.bincount(partial[partial <= cap], minlength=cap + 1)
    count = np.cumsum(reps)[d2].astype(float)
    radii = h * np.sqrt(d2.astype(float))
    radii[0] = 0.5 * h
    lookup = np.full(cap + 1, -1, dtype=np.int64)
    lookup[d2] = np.arange(len(d2))
    for arr in (d2, radii, count, lookup):
        arr.setflags(write=False)
    return RadiusTable(d2, radii, count, lookup, float(h))


def radius_set(shape, h: float) -> np.ndarray:
    return radius_table(tuple(shape), float(h)).radii


@lru_cache(maxsize=128)
def _weights_cached(shape, h, alpha):
    tab = radius_table(shape, h)
    w = np.array([math.pow(r, alpha) for r in tab.radii.tolist()])
    w.setflags(write=False)
    return w


def _weights(tab: RadiusTable, alpha: float) -> np.ndarray:
    if alpha == 0:
        return np.ones(len(tab))
    return np.array([math.pow(r, alpha) for r in tab.radii.tolist()])


def _ball_sup_python(support, values, centers, lookup, weight, count, k_lo, k_hi, out):
    K = len(weight)
    for c in range(len(centers)):
        d2 = np.sum((support - centers[c]) ** 2, axis=1)
        shell = np.bincount(lookup[d2], weights=values, minlength=K)[:k_hi]
        S = np.cumsum(shell)
        v = weight[k_lo:k_hi] * (S[k_lo:k_hi] / count[k_lo:k_hi])
        out[c] = max(float(v.max()), 0.0) if len(v) else 0.0


def _suffix_bound(weight, count, k_lo, k_hi):
    g = np.zeros(len(weight) + 1)
    g[k_lo:k_hi] = weight[k_lo:k_hi] / count[k_lo:k_hi]
    return np.maximum.accumulate(g[::-1])[::-1].copy()


def _ball_sup(values: np.ndarray, h: float, alpha: float, k_range, where=None) -> np.ndarray:
    values = np.abs(np.asarray(values, dtype=float))
    tab = radius_table(values.shape, float(h))
    weight = _weights_cached(values.shape, float(h), float(alpha))
    k_lo, k_hi = k_range(tab)
    out = np.full(values.shape, np.nan)
    if where is None:
        where = np.ones(values.shape, dtype=bool)
    centers = np.ascontiguousarray(np.argwhere(where), dtype=np.int64)
    if k_lo >= k_hi:
        out[where] = 0.0
        return out
    nz = values != 0
    support = np.ascontiguousarray(np.argwhere(nz), dtype=np.int64)
    svals = np.ascontiguousarray(values[nz])
    res = np.zeros(len(centers))
    if _backend == "cython":
        suffix = _suffix_bound(weight, tab.count, k_lo, k_hi)
        total = float(svals.sum()) if len(svals) else 0.0
        chunks = np.array_split(np.arange(len(centers)), _threads())

        def run(idx):
            part = np.zeros(len(idx))
            _kernels.ball_sup(support, svals, np.ascontiguousarray(centers[idx]), tab.lookup,
                              weight, tab.count, suffix, k_lo, k_hi, total, part)
            res[idx] = part

        if len(chunks) == 1:
            run(chunks[0])
        else:
            with ThreadPoolExecutor(len(chunks)) as pool:
                list(pool.map(run, [c for c in chunks if len(c)]))
    else:
        _ball_sup_python(support, svals, centers, tab.lookup, weight, tab.count, k_lo, k_hi, res)
    out[where] = res
    return out


def _check_alpha(alpha: float, n: int) -> None:
    if not (0 <= alpha < n):
        raise InvalidOrder(f"order alpha must lie in [0, {n}), got {alpha}")


def _unwrap(f, h):
    if isinstance(f, AmbientField):
        return f.values, f.h, f
    if h is None:
        raise ValidationError("grid spacing h is required for plain arrays")
    return np.asarray(f, dtype=float), float(h), None


def _wrap(values, like):
    if like is None:
        return values
    return AmbientField(values, like.domain, like.pad)


def fractional_maximal(f, alpha: float, h: float | None = None, where=None):
    """M_alpha f at the cells selected by ``where`` (default: all); NaN elsewhere."""
    vals, h, like = _unwrap(f, h)
    _check_alpha(alpha, vals.ndim)
    return _wrap(_ball_sup(vals, h, alpha, lambda t: (0, len(t)), where), like)


def maximal(f, h: float | None = None, where=None):
    """Hardy-Littlewood maximal function M f."""
    return fractional_maximal(f, 0.0, h, where)


def cutoff_maximal(f, r: float, alpha: float = 0.0, h: float | None = None, where=None):
    """M^r_alpha f: supremum over radii rho < r (0 when no radius qualifies)."""
    vals, h, like = _unwrap(f, h)
    _check_alpha(alpha, vals.ndim)
    if not r > 0:
        raise ValidationError("cut-off radius must be positive")
    k_range = lambda t: (0, int(np.searchsorted(t.radii, r, side="left")))
    return _wrap(_ball_sup(vals, h, alpha, k_range, where), like)


def tail_maximal(f, r: float, alpha: float = 0.0, h: float | None = None, where=None):
    """T^r_alpha f: supremum over radii rho >= r up to the grid diameter."""
    vals, h, like = _unwrap(f, h)
    _check_alpha(alpha, vals.ndim)
    if not r > 0:
        raise ValidationError("cut-off radius must be positive")
    k_range = lambda t: (int(np.searchsorted(t.radii, r, side="left")), len(t))
    return _wrap(_ball_sup(vals, h, alpha, k_range, where), like)


def compose_mm_alpha(f, alpha: float, h: float | None = None, where=None):
    """M(M_alpha f): the inner operator is evaluated on the whole ambient grid."""
    inner = fractional_maximal(f, alpha, h)
    vals, h2, like = _unwrap(inner, h)
    return _wrap(_ball_sup(vals, h2, 0.0, lambda t: (0, len(t)), where), like)
