"""Discrete solver for div A(x, grad u) = div(|F|^{p-2} F) with Dirichlet data.

The unknown lives on nodes, the gradient on cells (forward differences from
the cell's lower corner), so the discrete divergence is exactly the adjoint
of the discrete gradient.  Solutions are minimisers of the discrete energy

    E(u) = sum_cells [ a(x_c) |grad u|^p / p - |F|^{p-2} F . grad u ] h^n

computed by damped Newton with Armijo backtracking.  For ``p < 2`` the
energy density is regularised, ``|xi|^2 -> |xi|^2 + delta^2``, with a short
continuation in ``delta``; for ``p > 2`` only the Hessian is regularised.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .domain import CellSet, DiscreteDomain, ball_cells
from .errors import (BallNotInterior, DegenerateData, InvalidExponent, NonConvergence,
                     ValidationError)

log = logging.getLogger(__name__)

MAX_NEWTON = 500
DEFAULT_TOL = 1e-8
ARMIJO_C = 1e-4
CONTINUATION = (1e-2, 1e-5, 1e-8)


def weight_sinsin(x: np.ndarray) -> np.ndarray:
    """a(x) = 1 + sin(2 pi x_1) sin(2 pi x_2) / 2, bounded in [1/2, 3/2]."""
    return 1.0 + 0.5 * np.sin(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1])


def _canonical_lambda2(p: float) -> float:
    # lower bound of <A(xi)-A(eta), xi-eta> / ((|xi|^2+|eta|^2)^{(p-2)/2} |xi-eta|^2)
    if p == 2:
        return 1.0
    if p < 2:
        return (p - 1) * 2.0 ** ((p - 2) / 2)
    return 0.25 * (2 * math.sqrt(2)) ** (2 - p)


@dataclass(frozen=True)
class OperatorSpec:
    """The nonlinearity A(x, xi) = a(x) |xi|^{p-2} xi and its structure constants."""

    p: float
    form: str = "canonical"
    lambda1: float | None = None
    lambda2: float | None = None

    def __post_init__(self):
        if not (self.p > 1) or not math.isfinite(self.p):
            raise InvalidExponent(f"p must be a finite real > 1, got {self.p}")
        if self.form not in ("canonical", "weighted"):
            raise ValidationError(f"unknown operator form {self.form!r}")
        a_min, a_max = (1.0, 1.0) if self.form == "canonical" else (0.5, 1.5)
        if self.lambda1 is None:
            object.__setattr__(self, "lambda1", a_max)
        if self.lambda2 is None:
            object.__setattr__(self, "lambda2", a_min * _canonical_lambda2(self.p))
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ValidationError("structure constants must be positive")

    def weight(self, x: np.ndarray) -> np.ndarray:
        if self.form == "canonical":
            return np.ones(x.shape[:-1])
        return weight_sinsin(x)

    def flux(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """A(x, xi) for points ``x`` (..., n) and vectors ``xi`` (..., n)."""
        s = np.linalg.norm(xi, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(s > 0, s ** (self.p - 2), 0.0)
        return (self.weight(x) * coef)[..., None] * xi


def structure_violations(op: OperatorSpec, samples: int = 10_000, seed: int = 0, n: int = 2):
    """Sample (x, xi, eta) and count violations of the growth and monotonicity bounds."""
    rng = np.random.default_rng(seed)
    x = rng.random((samples, n))
    scale = 10.0 ** rng.uniform(-3, 3, size=(samples, 1))
    xi = rng.normal(size=(samples, n)) * scale
    eta = rng.normal(size=(samples, n)) * scale * 10.0 ** rng.uniform(-1, 1, size=(samples, 1))
    A_xi, A_eta = op.flux(x, xi), op.flux(x, eta)
    nxi, neta = np.linalg.norm(xi, axis=-1), np.linalg.norm(eta, axis=-1)
    growth = np.linalg.norm(A_xi, axis=-1) > op.lambda1 * nxi ** (op.p - 1) * (1 + 1e-12)
    lhs = np.sum((A_xi - A_eta) * (xi - eta), axis=-1)
    rhs = op.lambda2 * (nxi**2 + neta**2) ** ((op.p - 2) / 2) * np.sum((xi - eta) ** 2, axis=-1)
    monotone = lhs < rhs * (1 - 1e-9)
    return {"growth": int(growth.sum()), "monotonicity": int(monotone.sum()), "samples": samples}


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Scalar node values on a domain's grid; ``info`` holds solver diagnostics."""

    domain: DiscreteDomain
    values: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.domain.node_shape:
            raise ValidationError(f"node array shape {vals.shape} != {self.domain.node_shape}")
        object.__setattr__(self, "values", vals)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.domain, self.values - other.values)

    @classmethod
    def from_function(cls, dom: DiscreteDomain, func) -> "GridFunction":
        x = dom.node_coords()
        return cls(dom, np.asarray(func(x), dtype=float) * np.ones(dom.node_shape))


@dataclass(frozen=True, eq=False)
class VectorField:
    """Per-cell n-vectors on a domain's grid."""

    domain: DiscreteDomain
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.domain.shape + (self.domain.n,):
            raise ValidationError(f"vector field shape {vals.shape} mismatches the grid")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, dom: DiscreteDomain) -> "VectorField":
        return cls(dom, np.zeros(dom.shape + (dom.n,)))

    @classmethod
    def from_function(cls, dom: DiscreteDomain, func) -> "VectorField":
        """Sample component k of ``func`` at the midpoint of the edge that the
        k-th forward difference of each cell spans (staggered sampling)."""
        out = np.empty(dom.shape + (dom.n,))
        corner = dom.node_coords()[tuple(slice(0, s) for s in dom.shape)]
        for k in range(dom.n):
            pts = corner.copy()
            pts[..., k] += 0.5 * dom.h
            out[..., k] = np.asarray(func(pts))[..., k]
        return cls(dom, out)

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)


def gradient(u: GridFunction) -> VectorField:
    """Forward-difference gradient on every cell of the grid box."""
    dom, v = u.domain, u.values
    comps = []
    for k in range(dom.n):
        hi = tuple(slice(1, None) if j == k else slice(0, -1) for j in range(dom.n))
        lo = tuple(slice(0, -1) for _ in range(dom.n))
        comps.append((v[hi] - v[lo]) / dom.h)
    return VectorField(dom, np.stack(comps, axis=-1))


class _Discretization:
    """Sparse forward-difference operators for a set of cells."""

    def __init__(self, dom: DiscreteDomain, cell_mask: np.ndarray, free_mask: np.ndarray):
        self.dom = dom
        self.cells = np.flatnonzero(cell_mask.ravel())
        multi = np.unravel_index(self.cells, dom.shape)
        base = np.ravel_multi_index(multi, dom.node_shape)
        m, nn = len(self.cells), int(np.prod(dom.node_shape))
        rows = np.concatenate([np.arange(m), np.arange(m)])
        self.D = []
        for k in range(dom.n):
            up = list(multi)
            up[k] = up[k] + 1
            nb = np.ravel_multi_index(tuple(up), dom.node_shape)
            data = np.concatenate([np.full(m, -1.0 / dom.h), np.full(m, 1.0 / dom.h)])
            self.D.append(sp.csr_matrix((data, (rows, np.concatenate([base, nb]))), shape=(m, nn)))
        self.free = np.flatnonzero(free_mask.ravel())
        self.D_free = [D.tocsc()[:, self.free].tocsr() for D in self.D]
        self.x = dom.cell_centers().reshape(-1, dom.n)[self.cells]
        self.vol = dom.h**dom.n

    def grad(self, u_flat: np.ndarray) -> np.ndarray:
        return np.stack([D @ u_flat for D in self.D], axis=-1)


class _Energy:
    def __init__(self, disc: _Discretization, p: float, weight: np.ndarray, G: np.ndarray):
        self.disc, self.p, self.a, self.G = disc, p, weight, G

    def value(self, g: np.ndarray, delta: float) -> float:
        p, s2 = self.p, np.sum(g * g, axis=-1)
        if delta > 0:
            dens = ((s2 + delta**2) ** (p / 2) - delta**p) / p
        else:
            dens = s2 ** (p / 2) / p
        return float(np.sum(self.a * dens - np.sum(self.G * g, axis=-1)) * self.disc.vol)

    def flux(self, g: np.ndarray, delta: float) -> np.ndarray:
        s2 = np.sum(g * g, axis=-1)
        if delta > 0:
            coef = (s2 + delta**2) ** ((self.p - 2) / 2)
        else:
            with np.errstate(divide="ignore"):
                coef = np.where(s2 > 0, s2 ** ((self.p - 2) / 2), 0.0)
        return (self.a * coef)[:, None] * g

    def residual(self, g: np.ndarray, delta: float) -> np.ndarray:
        q = self.flux(g, delta) - self.G
        return sum(Df.T @ q[:, k] for k, Df in enumerate(self.disc.D_free)) * self.disc.vol

    def hessian(self, g: np.ndarray, delta: float) -> sp.csr_matrix:
        p, s2 = self.p, np.sum(g * g, axis=-1) + delta**2
        phi = self.a * s2 ** ((p - 2) / 2)
        psi = self.a * (p - 2) * s2 ** ((p - 4) / 2)
        H = None
        n = g.shape[1]
        for k in range(n):
            for l in range(n):
                c = psi * g[:, k] * g[:, l] + (phi if k == l else 0.0)
                term = self.disc.D_free[k].T @ sp.diags(c) @ self.disc.D_free[l]
                H = term if H is None else H + term
        return (H * self.disc.vol).tocsc()


def _newton(energy: _Energy, u: np.ndarray, delta: float, delta_hess: float, tol: float,
            scale_fn, history: list, budget: int):
    disc = energy.disc
    free = disc.free
    it = 0
    res_rel = math.inf
    while True:
        g = disc.grad(u)
        r = energy.residual(g, delta)
        scale = scale_fn(g)
        res_rel = float(np.max(np.abs(r))) / scale if len(r) else 0.0
        E = energy.value(g, delta)
        history.append((len(history), E, res_rel, delta))
        if res_rel <= tol:
            return u, it, res_rel
        if it >= budget:
            raise NonConvergence(it, res_rel)
        H = energy.hessian(g, max(delta, delta_hess))
        d = spsolve(H, -r)
        slope = float(r @ d)
        if not slope < 0:
            d, slope = -r, -float(r @ r)
        t, accepted = 1.0, False
        slack = 64 * np.finfo(float).eps * (abs(E) + disc.vol)
        for _ in range(60):
            trial = u.copy()
            trial[free] += t * d
            E_t = energy.value(disc.grad(trial), delta)
            if E_t <= E + ARMIJO_C * t * slope + slack:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise NonConvergence(it, res_rel)
        # for p < 2 the full Newton step on a power law overshoots to the mirror
        # point (x -> (p-2)/(p-1) x), which Armijo accepts; keep halving while
        # the energy still drops
        while t > 1e-12:
            shorter = u.copy()
            shorter[free] += 0.5 * t * d
            E_s = energy.value(disc.grad(shorter), delta)
            if not E_s < E_t:
                break
            trial, E_t, t = shorter, E_s, 0.5 * t
        u = trial
        it += 1


def minimize_energy(op: OperatorSpec, dom: DiscreteDomain, cell_mask: np.ndarray,
                    free_mask: np.ndarray, u0: np.ndarray, G: np.ndarray | None = None,
                    tol: float = DEFAULT_TOL, data_scale: float | None = None):
    """Minimise the discrete energy over ``cell_mask`` with nodes outside
    ``free_mask`` held at their ``u0`` values.

    Returns ``(u, info)`` where ``info`` carries iterations, the relative
    residual sup-norm, the final energy and the per-iteration history.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    cell_mask = np.asarray(cell_mask, bool)
    free_mask = np.asarray(free_mask, bool)
    disc = _Discretization(dom, cell_mask, free_mask)
    n = dom.n
    if G is None:
        G = np.zeros((len(disc.cells), n))
    else:
        G = np.asarray(G, float).reshape(-1, n)[disc.cells]
    weight = op.weight(disc.x)
    energy = _Energy(disc, op.p, weight, G)
    u = np.asarray(u0, float).ravel().copy()

    g0 = disc.grad(u)
    if data_scale is None:
        data_scale = max(float(np.max(np.linalg.norm(g0, axis=-1), initial=0.0)),
                         float(np.max(np.linalg.norm(G, axis=-1), initial=0.0)) ** (1 / max(op.p - 1, 1e-12)))
    G_inf = float(np.max(np.linalg.norm(G, axis=-1), initial=0.0))
    face = dom.h ** (n - 1)

    def scale_fn(g):
        flux = energy.flux(g, 0.0)
        ref = max(G_inf, float(np.max(np.linalg.norm(flux, axis=-1), initial=0.0)))
        return face * ref if ref > 0 else face

    history: list = []
    if len(disc.free) == 0:
        E = energy.value(g0, 0.0)
        history.append((0, E, 0.0, 0.0))
        return u.reshape(dom.node_shape), dict(iterations=0, residual=0.0, energy=E,
                                               history=history, delta=0.0)
    data_scale = data_scale or 1.0
    if op.p < 2:
        deltas = [c * data_scale for c in CONTINUATION]
        delta_hess = 0.0
    else:
        deltas = [0.0]
        delta_hess = 1e-8 * data_scale
    total = 0
    res = math.inf
    for delta in deltas:
        try:
            u, it, res = _newton(energy, u, delta, delta_hess, tol, scale_fn, history,
                                 MAX_NEWTON - total)
        except NonConvergence as exc:
            raise NonConvergence(total + exc.iterations, exc.residual) from None
        total += it
    g = disc.grad(u)
    info = dict(iterations=total, residual=res, energy=energy.value(g, deltas[-1]),
                history=history, delta=deltas[-1])
    return u.reshape(dom.node_shape), info


def _data_scale(F: VectorField | None, sigma: GridFunction, mask) -> float:
    s = float(np.max(gradient(sigma).norm()[mask], initial=0.0))
    if F is not None:
        s = max(s, float(np.max(F.norm()[mask], initial=0.0)))
    return s


def solve_dirichlet(op: OperatorSpec, F: VectorField | None, sigma: GridFunction,
                    dom: DiscreteDomain | None = None, tol: float = DEFAULT_TOL,
                    initial: GridFunction | None = None) -> GridFunction:
    """Solve div A(x, grad u) = div(|F|^{p-2} F) in the domain, u = sigma on its boundary.

    ``sigma`` is a node function on the whole grid; its interior values seed
    Newton unless ``initial`` is given.  Diagnostics land in ``u.info``.
    """
    dom = dom or sigma.domain
    if sigma.domain is not dom:
        raise ValidationError("sigma must live on the solve domain")
    if F is None:
        F = VectorField.zeros(dom)
    mask = dom.interior_mask
    Fv = np.where(mask[..., None], F.values, 0.0)
    s = np.linalg.norm(Fv, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        G = np.where(s[..., None] > 0, s[..., None] ** (op.p - 2) * Fv, 0.0)
    u0 = (initial or sigma).values.copy()
    bnd = dom.boundary_node_mask
    u0[bnd] = sigma.values[bnd]
    u0[~dom.active_node_mask] = 0.0
    scale = _data_scale(F, sigma, mask) or None
    if initial is None and op.p != 2:
        # the linear (p = 2) problem with the same F is one Newton step and a far
        # better start than sigma for the nonlinear iteration
        u0, _ = minimize_energy(OperatorSpec(2.0, op.form), dom, mask, dom.free_node_mask, u0,
                                Fv, tol, data_scale=scale)
    vals, info = minimize_energy(op, dom, mask, dom.free_node_mask, u0, G, tol, data_scale=scale)
    info["p"] = op.p
    return GridFunction(dom, vals, info)


def _region_nodes(cell_mask: np.ndarray):
    from .domain import _adjacent_interior_count
    count = _adjacent_interior_count(cell_mask)
    return count > 0, count == 2**cell_mask.ndim


def solve_on_cells(op: OperatorSpec, boundary_values: GridFunction, cells: np.ndarray,
                   tol: float = DEFAULT_TOL) -> GridFunction:
    """A-harmonic function on a cell region with Dirichlet data from ``boundary_values``.

    Values at nodes outside the region's closure are NaN.
    """
    dom = boundary_values.domain
    closure, free = _region_nodes(cells)
    u0 = np.where(closure, boundary_values.values, 0.0)
    scale = float(np.max(gradient(boundary_values).norm()[cells], initial=0.0))
    vals, info = minimize_energy(op, dom, cells, free, u0, None, tol, data_scale=scale or None)
    vals = np.where(closure, vals, np.nan)
    info["p"] = op.p
    return GridFunction(dom, vals, info)


def solve_comparison_interior(op: OperatorSpec, u: GridFunction, sigma: GridFunction,
                              ball: CellSet, tol: float = DEFAULT_TOL) -> GridFunction:
    """w with div A(x, grad w) = 0 in the ball and w = u - sigma on its discrete boundary."""
    from scipy.ndimage import binary_dilation, generate_binary_structure
    dom = u.domain
    # pad so that a ball touching the edge of the grid box also counts as leaving Omega
    grown = binary_dilation(np.pad(ball.mask, 1), structure=generate_binary_structure(dom.n, dom.n))
    if not ball.mask.any() or np.any(grown & ~np.pad(dom.interior_mask, 1)):
        raise BallNotInterior("ball cells and their neighbours must be interior cells")
    return solve_on_cells(op, u - sigma, ball.mask, tol)


def boundary_region(dom: DiscreteDomain, center, radius: float) -> np.ndarray:
    """Cells of Omega_{10R} = B_{10R}(center) intersected with Omega."""
    return ball_cells(dom, center, 10 * radius).mask & dom.interior_mask


def solve_comparison_boundary(op: OperatorSpec, u: GridFunction, sigma: GridFunction,
                              ball_center, radius: float, tol: float = DEFAULT_TOL) -> GridFunction:
    """w on Omega_{10R} solving the homogeneous equation, extended by u - sigma."""
    dom = u.domain
    if radius <= 0 or radius > dom.diam:
        raise ValidationError("radius must lie in (0, diam]")
    region = boundary_region(dom, ball_center, radius)
    diff = u - sigma
    if not region.any():
        raise ValidationError("boundary ball does not meet the domain")
    w = solve_on_cells(op, diff, region, tol)
    vals = np.where(np.isnan(w.values), diff.values, w.values)
    vals = np.where(dom.active_node_mask, vals, 0.0)
    return GridFunction(dom, vals, w.info)


def cell_power(field: VectorField, p: float, mask: np.ndarray | None = None) -> np.ndarray:
    """|field|^p per cell, zero outside ``mask``."""
    vals = field.norm() ** p
    if mask is not None:
        vals = np.where(mask, vals, 0.0)
    return vals


def energy_ratio(u: GridFunction, F: VectorField | None, sigma: GridFunction, p: float) -> float:
    """sum |grad u|^p / sum (|F|^p + |grad sigma|^p) over the domain's cells."""
    dom = u.domain
    mask = dom.interior_mask
    num = float(np.sum(cell_power(gradient(u), p, mask)))
    den = float(np.sum(cell_power(gradient(sigma), p, mask)))
    if F is not None:
        den += float(np.sum(cell_power(F, p, mask)))
    if den == 0:
        raise DegenerateData("data energy vanishes", numerator=num)
    return num / den


def reverse_holder_ratio(w: GridFunction, center, rho: float, theta: float, p: float) -> float:
    """(avg_{B_{rho/2}} |grad w|^theta)^{1/theta} / (avg_{B_rho} |grad w|^p)^{1/p}."""
    if not theta > p:
        raise ValidationError("theta must exceed p")
    dom = w.domain
    g = gradient(w).norm()
    defined = np.isfinite(g)
    big = ball_cells(dom, center, rho).mask & defined
    small = ball_cells(dom, center, rho / 2).mask & defined
    if not small.any():
        raise ValidationError("inner ball contains no cells")
    den = float(np.mean(g[big] ** p)) ** (1 / p)
    if den == 0:
        raise DegenerateData("gradient vanishes on the ball")
    num = float(np.mean(g[small] ** theta)) ** (1 / theta)
    return num / den


def h1_error(u: GridFunction, exact) -> float:
    """Discrete H^1 norm of u - I_h(exact) over the domain's cells."""
    dom = u.domain
    e = GridFunction(dom, u.values - np.asarray(exact(dom.node_coords())))
    mask = dom.interior_mask
    grad2 = np.sum(gradient(e).values ** 2, axis=-1)
    corners = [e.values[tuple(slice(c, c + s) for c, s in zip(corner, dom.shape))]
               for corner in np.ndindex(*(2,) * dom.n)]
    mean2 = np.mean(corners, axis=0) ** 2
    return float(np.sqrt(np.sum((grad2 + mean2)[mask]) * dom.h**dom.n))
