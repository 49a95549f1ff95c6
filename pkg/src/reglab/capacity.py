"""Variational p-capacity of cell sets and the uniform thickness certificate.

On a finite grid every cell set is compact, so capacity is only needed for
compact sets:

    cap_p(K, B) = min { sum_cells |grad phi|^p h^n : phi = 1 on K, phi = 0 off B }.

``phi`` lives on nodes.  Nodes of K cells are fixed to 1, nodes touching a
cell outside B are fixed to 0, and the remaining nodes are free; the energy
is minimised by the same Newton solver used for the Dirichlet problem.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import CellSet, DiscreteDomain, _adjacent_interior_count
from .errors import InvalidNesting, NonConvergence, ValidationError
from .solver import DEFAULT_TOL, OperatorSpec, minimize_energy

log = logging.getLogger(__name__)


def _capacity_masks(K: np.ndarray, B: np.ndarray, p: float, h: float, origin=None,
                    tol: float = DEFAULT_TOL) -> float:
    if not K.any():
        return 0.0
    n = K.ndim
    ones = _adjacent_interior_count(K) > 0
    inside_B = _adjacent_interior_count(B) == 2**n
    free = inside_B & ~ones
    dom = DiscreteDomain(h, tuple(origin or (0.0,) * n), np.ones(K.shape, bool), name="capacity")
    u0 = ones.astype(float)
    _, info = minimize_energy(OperatorSpec(p), dom, np.ones(K.shape, bool), free, u0, None,
                              tol, data_scale=1.0 / h)
    # energy = sum |grad|^p / p * h^n with G = 0
    return p * info["energy"]


def p_capacity(K: CellSet, B: CellSet, p: float, tol: float = DEFAULT_TOL) -> float:
    """Minimal p-energy of node functions equal to 1 on K and 0 outside B."""
    if not p > 1:
        raise ValidationError(f"p must exceed 1, got {p}")
    if K.domain is not B.domain and K.mask.shape != B.mask.shape:
        raise ValidationError("K and B must live on the same grid")
    if not K.issubset(B):
        raise InvalidNesting("K is not contained in B")
    dom = K.domain
    return _capacity_masks(K.mask, B.mask, p, dom.h, dom.origin, tol)


def _local_balls(shape_cells: int, r_cells: float):
    """Closed ball of radius r and open ball of radius 2r around the central cell
    of a (2m+1)^n block, radii in cell units."""
    m = shape_cells
    idx = np.indices((2 * m + 1, 2 * m + 1)) - m
    d2 = np.sum(idx**2, axis=0).astype(float)
    closed = d2 <= r_cells**2 * (1 + 1e-12)
    open_ = d2 < (2 * r_cells) ** 2 * (1 - 1e-12)
    return closed, open_


def ball_capacity(r: float, h: float, p: float = 2.0, tol: float = DEFAULT_TOL) -> float:
    """cap_p(closed B_r, open B_2r) for balls centred at a cell center, n = 2."""
    rc = r / h
    m = int(math.ceil(2 * rc)) + 1
    K, B = _local_balls(m, rc)
    return _capacity_masks(K, B, p, h, tol=tol)


@dataclass(frozen=True)
class ThicknessParams:
    c0: float = 0.05
    r0: float = 0.25
    max_samples: int = 200
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.c0 <= 1):
            raise ValidationError("c0 must lie in (0, 1]")
        if not self.r0 > 0:
            raise ValidationError("r0 must be positive")
        if self.max_samples < 1:
            raise ValidationError("max_samples must be at least 1")


@dataclass
class ThicknessReport:
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    notice: str = ""
    c0: float = 0.0

    @property
    def min_ratio(self) -> float:
        return min((row["ratio"] for row in self.rows), default=math.nan)

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(row["pass"] for row in self.rows)

    @property
    def vacuous(self) -> bool:
        return not self.rows and bool(self.notice)

    def csv_rows(self):
        header = ["x", "y", "r", "cap_complement", "cap_ball", "ratio", "pass"]
        return header, [[*row["x"], row["r"], row["cap_complement"], row["cap_ball"],
                         row["ratio"], int(row["pass"])] for row in self.rows]


def exterior_samples(dom: DiscreteDomain, max_samples: int = 200, seed: int = 0) -> np.ndarray:
    """Exterior cells sharing a node with an interior cell, as integer indices
    relative to the domain grid (may lie outside the array)."""
    from scipy.ndimage import binary_dilation, generate_binary_structure
    mask = np.pad(dom.interior_mask, 1)
    ring = binary_dilation(mask, generate_binary_structure(dom.n, dom.n)) & ~mask
    cells = np.argwhere(ring) - 1
    if len(cells) > max_samples:
        pick = np.random.default_rng(seed).choice(len(cells), max_samples, replace=False)
        cells = cells[np.sort(pick)]
    return cells


def _exterior_block(dom: DiscreteDomain, cell, m: int) -> np.ndarray:
    """Exterior indicator on the (2m+1)^n block centred at ``cell``."""
    lo = np.asarray(cell) - m
    block = np.ones((2 * m + 1,) * dom.n, bool)
    src, dst = [], []
    for k, size in enumerate(dom.shape):
        a, b = max(lo[k], 0), min(lo[k] + 2 * m + 1, size)
        if a >= b:
            return block
        src.append(slice(a, b))
        dst.append(slice(a - lo[k], b - lo[k]))
    block[tuple(dst)] = ~dom.interior_mask[tuple(src)]
    return block


def thickness_certificate(dom: DiscreteDomain, p: float, params: ThicknessParams | None = None,
                          tol: float = DEFAULT_TOL) -> ThicknessReport:
    """Capacity density of the complement at sampled boundary points and dyadic scales."""
    params = params or ThicknessParams()
    if not p > 1:
        raise ValidationError(f"p must exceed 1, got {p}")
    report = ThicknessReport(c0=params.c0)
    if p > dom.n:
        report.notice = (f"p = {p} > n = {dom.n}: every point has positive capacity, "
                         "the condition holds trivially; scan skipped")
        log.info(report.notice)
        return report
    h = dom.h
    radii = []
    r = 4 * h
    while r <= params.r0 * (1 + 1e-12):
        radii.append(r)
        r *= 2
    if not radii:
        report.skipped.append(dict(r=params.r0, reason="r0 below the 4h resolution floor"))
        return report
    report.skipped.append(dict(r="< 4h", reason="below the resolution floor"))
    cells = exterior_samples(dom, params.max_samples, params.seed)
    origin = np.asarray(dom.origin, float)
    for r in radii:
        rc = r / h
        m = int(math.ceil(2 * rc)) + 1
        K_ball, B_ball = _local_balls(m, rc)
        cap_ball = _capacity_masks(K_ball, B_ball, p, h, tol=tol)
        for cell in cells:
            K = K_ball & _exterior_block(dom, cell, m)
            try:
                cap_c = _capacity_masks(K, B_ball, p, h, tol=tol)
            except NonConvergence as exc:
                x = tuple(origin + (cell + 0.5) * h)
                raise NonConvergence(exc.iterations, exc.residual, where=(x, r)) from None
            ratio = cap_c / cap_ball
            report.rows.append(dict(x=tuple((origin + (cell + 0.5) * h).tolist()), r=r,
                                    cap_complement=cap_c, cap_ball=cap_ball, ratio=ratio,
                                    **{"pass": ratio >= params.c0}))
    return report
