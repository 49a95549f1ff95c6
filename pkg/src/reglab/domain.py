"""Uniform-grid domains, cell sets, measures and zero extension.

Cells carry the piecewise-constant quantities (gradients, data F, maximal
functions); nodes carry the scalar unknowns.  Arrays are indexed
``[i_1, ..., i_n]`` with axis ``k`` running along coordinate ``x_{k+1}``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import pdist

from .errors import EmptyDomain, ValidationError

SHAPES = ("square", "disk", "L-shape", "square-minus-disk")


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        arity = {"square": 1, "disk": 1, "L-shape": 1, "square-minus-disk": 2}
        if self.kind not in arity:
            raise ValidationError(f"unknown shape {self.kind!r}; expected one of {SHAPES}")
        if len(self.params) != arity[self.kind]:
            raise ValidationError(f"shape {self.kind} takes {arity[self.kind]} parameter(s)")
        if any(not (v > 0) for v in self.params):
            raise ValidationError(f"shape parameters must be positive: {self.params}")
        if self.kind == "square-minus-disk" and 2 * self.params[1] >= self.params[0]:
            raise ValidationError("hole radius must be below half the side length")

    def __str__(self):
        return f"{self.kind}({', '.join(repr(float(v)) for v in self.params)})"


_SHAPE_RE = re.compile(r"^\s*([A-Za-z][A-Za-z\-]*)\s*\(([^)]*)\)\s*$")


def parse_shape(text: str | ShapeSpec) -> ShapeSpec:
    """Parse ``"square(1)"``, ``"square-minus-disk(1, 0.25)"`` etc."""
    if isinstance(text, ShapeSpec):
        return text
    m = _SHAPE_RE.match(text)
    if not m:
        raise ValidationError(f"cannot parse shape descriptor {text!r}")
    kind = m.group(1)
    if kind.lower() in ("l-shape", "lshape"):
        kind = "L-shape"
    try:
        params = tuple(float(tok) for tok in m.group(2).split(",") if tok.strip())
    except ValueError as exc:
        raise ValidationError(f"bad shape parameters in {text!r}") from exc
    return ShapeSpec(kind, params)


def _inside(spec: ShapeSpec, pts: np.ndarray) -> np.ndarray:
    # pts: (..., n); strict inequalities so that a center on the boundary is exterior
    L = spec.params[0]
    if spec.kind == "disk":
        return np.sum(pts**2, axis=-1) < L * L
    in_box = np.all((pts > 0) & (pts < L), axis=-1)
    if spec.kind == "square":
        return in_box
    if spec.kind == "L-shape":
        notch = (pts[..., 0] >= L / 2) & (pts[..., 1] >= L / 2)
        return in_box & ~notch
    r = spec.params[1]
    return in_box & (np.sum((pts - L / 2) ** 2, axis=-1) > r * r)


def _bbox(spec: ShapeSpec, n: int):
    L = spec.params[0]
    if spec.kind == "disk":
        return np.full(n, -L), np.full(n, L)
    return np.zeros(n), np.full(n, L)


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    """Cells of a uniform grid of spacing ``h`` that approximate a domain."""

    h: float
    origin: tuple[float, ...]
    interior_mask: np.ndarray
    name: str = ""
    diam: float = field(init=False)
    boundary_node_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mask = np.asarray(self.interior_mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "interior_mask", mask)
        if not mask.any():
            raise EmptyDomain("no cell center falls inside the shape")
        _, ncomp = ndimage.label(mask, structure=ndimage.generate_binary_structure(mask.ndim, 1))
        if ncomp != 1:
            raise ValidationError(f"interior mask has {ncomp} connected components")
        object.__setattr__(self, "diam", _center_diameter(mask, self.h))
        count = _adjacent_interior_count(mask)
        bnd = (count > 0) & (count < 2**mask.ndim)
        bnd.setflags(write=False)
        object.__setattr__(self, "boundary_node_mask", bnd)

    @property
    def n(self) -> int:
        return self.interior_mask.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.interior_mask.shape

    @property
    def node_shape(self) -> tuple[int, ...]:
        return tuple(s + 1 for s in self.shape)

    @property
    def measure(self) -> float:
        return int(self.interior_mask.sum()) * self.h**self.n

    @property
    def active_node_mask(self) -> np.ndarray:
        """Nodes touching at least one interior cell (closure of the domain)."""
        return _adjacent_interior_count(self.interior_mask) > 0

    @property
    def free_node_mask(self) -> np.ndarray:
        return _adjacent_interior_count(self.interior_mask) == 2**self.n

    @property
    def boundary_nodes(self) -> np.ndarray:
        """Boundary node indices, one row per node."""
        return np.argwhere(self.boundary_node_mask)

    def cell_centers(self) -> np.ndarray:
        axes = [self.origin[k] + (np.arange(s) + 0.5) * self.h for k, s in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def node_coords(self) -> np.ndarray:
        axes = [self.origin[k] + np.arange(s) * self.h for k, s in enumerate(self.node_shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def cell_index(self, point) -> tuple[int, ...]:
        """Index of the cell containing ``point`` (clipped to the box)."""
        idx = np.floor((np.asarray(point, float) - np.asarray(self.origin)) / self.h).astype(int)
        return tuple(int(np.clip(i, 0, s - 1)) for i, s in zip(idx, self.shape))

    def translated(self, cells: tuple[int, ...]) -> "DiscreteDomain":
        """The same cell pattern shifted by whole cells (box grows accordingly)."""
        pads = [(max(c, 0), max(-c, 0)) for c in cells]
        mask = np.pad(self.interior_mask, pads)
        origin = tuple(o - max(-c, 0) * self.h for o, c in zip(self.origin, cells))
        return DiscreteDomain(self.h, origin, mask, self.name)


def _adjacent_interior_count(mask: np.ndarray) -> np.ndarray:
    """For each node, the number of interior cells among its 2^n neighbours."""
    padded = np.pad(mask.astype(np.int32), 1)
    count = np.zeros(tuple(s + 1 for s in mask.shape), dtype=np.int32)
    for corner in np.ndindex(*(2,) * mask.ndim):
        sl = tuple(slice(c, c + s + 1) for c, s in zip(corner, mask.shape))
        count += padded[sl]
    return count


def _center_diameter(mask: np.ndarray, h: float) -> float:
    # the farthest pair is always realised by cells with an exterior neighbour
    eroded = ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(mask.ndim, 1))
    edge = np.argwhere(mask & ~eroded)
    if len(edge) < 2:
        return 0.0
    return float(pdist(edge.astype(float)).max() * h)


def build_domain(shape_spec, h: float, n: int = 2) -> DiscreteDomain:
    """Cells of spacing ``h`` whose centers lie strictly inside the shape."""
    if not (h > 0):
        raise ValidationError(f"spacing h must be positive, got {h}")
    if n not in (2, 3):
        raise ValidationError("only n = 2 or n = 3 is supported")
    spec = parse_shape(shape_spec)
    lo, hi = _bbox(spec, n)
    counts = [max(1, math.ceil((b - a) / h - 1e-9)) for a, b in zip(lo, hi)]
    axes = [a + (np.arange(c) + 0.5) * h for a, c in zip(lo, counts)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    mask = _inside(spec, centers)
    if not mask.any():
        raise EmptyDomain(f"no cell of spacing {h} falls inside {spec}")
    return DiscreteDomain(float(h), tuple(float(a) for a in lo), mask, str(spec))


@dataclass(frozen=True, eq=False)
class CellSet:
    """A set of cells of ``domain``'s grid (need not lie inside the domain)."""

    domain: DiscreteDomain
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != self.domain.shape:
            raise ValidationError(f"cell mask shape {mask.shape} != grid shape {self.domain.shape}")
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_indices(cls, domain, indices):
        mask = np.zeros(domain.shape, dtype=bool)
        idx = np.asarray(indices, dtype=int).reshape(-1, domain.n)
        mask[tuple(idx.T)] = True
        return cls(domain, mask)

    def __len__(self):
        return int(self.mask.sum())

    def __or__(self, other):
        return CellSet(self.domain, self.mask | other.mask)

    def __and__(self, other):
        return CellSet(self.domain, self.mask & other.mask)

    def __sub__(self, other):
        return CellSet(self.domain, self.mask & ~other.mask)

    def issubset(self, other) -> bool:
        return not np.any(self.mask & ~other.mask)


def lebesgue_measure(s: CellSet) -> float:
    return len(s) * s.domain.h ** s.domain.n


def domain_cells(dom: DiscreteDomain) -> CellSet:
    return CellSet(dom, dom.interior_mask)


def ball_cells(dom: DiscreteDomain, center, radius: float) -> CellSet:
    """Cells whose centers lie within ``radius`` of ``center`` (ties included)."""
    d2 = np.sum((dom.cell_centers() - np.asarray(center, float)) ** 2, axis=-1)
    return CellSet(dom, d2 <= radius * radius * (1 + 1e-12))


def diameter(dom: DiscreteDomain) -> float:
    return dom.diam


def pad_width(dom: DiscreteDomain) -> int:
    """Ambient padding in cells: enough to hold a ball of radius diam(Omega)."""
    return int(math.ceil(dom.diam / dom.h - 1e-9))


@dataclass(frozen=True, eq=False)
class AmbientField:
    """A cell function on the padded ambient grid around a domain."""

    values: np.ndarray
    domain: DiscreteDomain
    pad: int

    @property
    def h(self) -> float:
        return self.domain.h

    @property
    def inner(self) -> tuple[slice, ...]:
        return tuple(slice(self.pad, self.pad + s) for s in self.domain.shape)

    @property
    def domain_mask(self) -> np.ndarray:
        mask = np.zeros(self.values.shape, dtype=bool)
        mask[self.inner] = self.domain.interior_mask
        return mask

    def restrict(self) -> np.ndarray:
        """Values on the domain's own cell grid."""
        return self.values[self.inner]


def extend_by_zero(f, dom: DiscreteDomain, pad: int | None = None) -> AmbientField:
    """Cell function on Omega -> padded ambient grid, zero outside Omega.

    Idempotent: an AmbientField is returned unchanged when ``pad`` agrees.
    """
    if isinstance(f, AmbientField):
        if pad is None or pad == f.pad:
            return f
        f = f.restrict()
    values = np.asarray(f, dtype=float)
    if values.shape != dom.shape:
        raise ValidationError(f"cell function shape {values.shape} != grid shape {dom.shape}")
    if pad is None:
        pad = pad_width(dom)
    out = np.pad(np.where(dom.interior_mask, values, 0.0), pad)
    return AmbientField(out, dom, pad)


def rle_encode(mask: np.ndarray) -> list[tuple[int, int]]:
    """Run-length encoding of a flat (row-major) cell mask as (start, length)."""
    flat = np.asarray(mask, dtype=np.int8).ravel()
    edges = np.diff(np.concatenate(([0], flat, [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return [(int(a), int(b - a)) for a, b in zip(starts, stops)]


def rle_decode(runs, shape) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    for start, length in runs:
        flat[start:start + length] = True
    return flat.reshape(shape)
