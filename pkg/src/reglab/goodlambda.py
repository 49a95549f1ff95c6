"""Good-lambda level-set experiments and the audits that feed them.

Given a solved instance (u, F, sigma) the experiments compare super-level
sets of maximal functions of g = |grad u|^p and d = |F|^p + |grad sigma|^p:

    V = {M g > eps^-a lam, M d <= eps^b lam},   W = {M g > lam}

(or the fractional family with M M_alpha g and M_alpha d), all intersected
with the domain, and report |V| / (eps |W|) on a lambda grid.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import maximal_ops as mx
from .domain import CellSet, DiscreteDomain, ball_cells, extend_by_zero
from .errors import (CorpusTooSmall, DegenerateData, EmptyRange, HypothesisViolated,
                     InvalidParams, QOutOfRange, ValidationError)
from .lorentz import LorentzParams, lorentz_quasinorm
from .solver import (DEFAULT_TOL, GridFunction, OperatorSpec, VectorField, cell_power,
                     gradient, reverse_holder_ratio, solve_comparison_boundary,
                     solve_comparison_interior)

log = logging.getLogger(__name__)

THETA_OFFSETS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)


@dataclass(frozen=True)
class GoodLambdaParams:
    """Exponents and grids of a sweep.

    ``a`` defaults to p (n - alpha) / (n theta) and ``b`` to p (1 - a), so that
    a + b / p = 1.  ``family`` selects the threshold on eps: ``"maximal"``
    uses eps0 = 3^{-(n+1)/a}, ``"fractional"`` requires eps0^{-a} > 4^n.
    """

    p: float
    theta: float
    alpha: float = 0.0
    n: int = 2
    eps: tuple = ()
    a: float | None = None
    n_lambda: int = 40
    percentiles: tuple = (1.0, 99.9)
    family: str = "fractional"

    def __post_init__(self):
        if not (0 <= self.alpha < self.n):
            raise InvalidParams(f"alpha must lie in [0, {self.n})")
        if not self.theta > self.p:
            raise InvalidParams("theta must exceed p")
        if self.a is None:
            object.__setattr__(self, "a", self.p * (self.n - self.alpha) / (self.n * self.theta))
        a, b = self.a, self.b
        if not (0 < a < 1):
            raise InvalidParams(f"a = {a} must lie in (0, 1)")
        if not (b > 0 and a + b > 1):
            raise InvalidParams(f"b = {b} must be positive with a + b > 1")
        if self.family not in ("maximal", "fractional"):
            raise InvalidParams(f"unknown family {self.family!r}")
        if not self.eps:
            object.__setattr__(self, "eps", self.default_eps())
        eps = tuple(float(e) for e in self.eps)
        object.__setattr__(self, "eps", eps)
        if any(not (0 < e < 1) for e in eps):
            raise InvalidParams("eps values must lie in (0, 1)")
        if self.family == "fractional" and any(e >= self.eps0 for e in eps):
            raise InvalidParams(f"eps must stay below eps0 = {self.eps0:.3e} (eps0^-a > 4^n)")

    @property
    def b(self) -> float:
        return self.p * (1 - self.a)

    @property
    def eps0(self) -> float:
        if self.family == "fractional":
            return 4.0 ** (-self.n / self.a)
        return (1 / 3) ** ((self.n + 1) / self.a)

    def default_eps(self) -> tuple:
        if self.family == "fractional":
            e0 = 4.0 ** (-self.n / self.a)
            return (0.9 * e0, 0.5 * e0, 0.25 * e0)
        return (0.01, 0.005, 0.0025)


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        vals = [r["ratio"] for r in self.rows if not r["flagged"]]
        return max(vals, default=0.0)

    def csv_rows(self):
        keys = ["eps", "lam", "measure_V", "measure_W", "ratio", "flagged"]
        meta = [k for k in ("p", "alpha", "domain", "h", "seed") if k in self.meta]
        return keys + meta, [[r[k] for k in keys] + [self.meta[k] for k in meta] for r in self.rows]


@dataclass
class InstanceFields:
    """Cell fields of a solved instance on the padded grid, plus maximal functions on Omega."""

    domain: DiscreteDomain
    p: float
    g: object
    d: object
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_solution(cls, u: GridFunction, F: VectorField | None, sigma: GridFunction, p: float):
        dom = u.domain
        mask = dom.interior_mask
        g = cell_power(gradient(u), p, mask)
        d = cell_power(gradient(sigma), p, mask)
        if F is not None:
            d = d + cell_power(F, p, mask)
        return cls(dom, p, extend_by_zero(g, dom), extend_by_zero(d, dom))

    @property
    def where(self) -> np.ndarray:
        return self.g.domain_mask

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn().values[self.g.inner]
        return self._cache[key]

    def M_g(self):
        return self._get(("M", "g"), lambda: mx.maximal(self.g, where=self.where))

    def M_d(self):
        return self._get(("M", "d"), lambda: mx.maximal(self.d, where=self.where))

    def Ma_g(self, alpha):
        return self._get(("Ma", "g", alpha), lambda: mx.fractional_maximal(self.g, alpha, where=self.where))

    def Ma_d(self, alpha):
        if alpha == 0:
            return self.M_d()
        return self._get(("Ma", "d", alpha), lambda: mx.fractional_maximal(self.d, alpha, where=self.where))

    def MMa_g(self, alpha):
        return self._get(("MMa", "g", alpha), lambda: mx.compose_mm_alpha(self.g, alpha, where=self.where))


def _as_fields(u, F, sigma, p, fields):
    if fields is not None:
        return fields
    return InstanceFields.from_solution(u, F, sigma, p)


def lambda_grid(values: np.ndarray, n: int = 40, percentiles=(1.0, 99.9)) -> np.ndarray:
    pos = values[values > 0]
    if len(pos) == 0:
        return np.array([])
    lo, hi = np.percentile(pos, percentiles)
    if not hi > lo:
        return np.array([lo])
    return np.geomspace(lo, hi, n)


def _sweep(big, data, dom: DiscreteDomain, params: GoodLambdaParams, lams, meta) -> ExperimentReport:
    mask = dom.interior_mask
    big = np.where(mask, big, 0.0)
    data = np.where(mask, data, np.inf)
    cell = dom.h**dom.n
    if lams is None:
        lams = lambda_grid(big[mask], params.n_lambda, params.percentiles)
        if len(lams) == 0:
            raise EmptyRange("the maximal function vanishes on Omega; every W set is empty")
    lams = np.asarray(lams, float)
    report = ExperimentReport(meta=dict(meta, a=params.a, b=params.b, eps0=params.eps0,
                                        family=params.family, alpha=params.alpha))
    viol = dict(inclusion=0, lam_monotone_W=0, lam_monotone_V=0, eps_monotone=0)
    prev_V = {}
    a, b = params.a, params.b
    for e in sorted(params.eps, reverse=True):
        last_V = last_W = None
        for lam in lams:
            V = (big > e**-a * lam) & (data <= e**b * lam)
            W = big > lam
            mV, mW = float(V.sum()) * cell, float(W.sum()) * cell
            flagged = mW == 0
            ratio = math.nan if flagged else mV / (e * mW)
            viol["inclusion"] += int(np.any(V & ~W))
            if last_W is not None:
                viol["lam_monotone_W"] += int(mW > last_W)
                viol["lam_monotone_V"] += int(mV > last_V)
            # V(eps') must sit inside V(eps) for every larger eps already swept
            for larger in prev_V.get(lam, []):
                viol["eps_monotone"] += int(np.any(V & ~larger))
            prev_V.setdefault(lam, []).append(V)
            last_V, last_W = mV, mW
            report.rows.append(dict(eps=e, lam=float(lam), measure_V=mV, measure_W=mW,
                                    ratio=ratio, flagged=flagged, V=V, W=W))
    report.violations = viol
    report.constants["C_goodlambda"] = report.max_ratio
    return report


def good_lambda_sweep(u, F, sigma, params: GoodLambdaParams, lams=None, fields=None,
                      meta=None) -> ExperimentReport:
    """V = {M g > eps^-a lam, M d <= eps^b lam}, W = {M g > lam} on Omega."""
    if params.alpha != 0:
        raise InvalidParams("the maximal-function sweep needs alpha = 0")
    f = _as_fields(u, F, sigma, params.p, fields)
    return _sweep(f.M_g(), f.M_d(), f.domain, params, lams, dict(meta or {}, kind="maximal"))


def good_lambda_fractional_sweep(u, F, sigma, params: GoodLambdaParams, lams=None, fields=None,
                                 meta=None) -> ExperimentReport:
    """V = {M M_alpha g > eps^-a lam, M_alpha d <= eps^b lam}, W = {M M_alpha g > lam}."""
    f = _as_fields(u, F, sigma, params.p, fields)
    return _sweep(f.MMa_g(params.alpha), f.Ma_d(params.alpha), f.domain, params, lams,
                  dict(meta or {}, kind="fractional"))


@dataclass(frozen=True)
class NormRatio:
    ratio: float
    numerator: float
    denominator: float
    in_window: bool
    flagged: bool


def q_window(theta: float, p: float, alpha: float = 0.0, n: int = 2) -> float:
    """Upper end of the admissible q range, theta n / (p (n - alpha))."""
    return theta * n / (p * (n - alpha))


def norm_estimate_ratio(u, F, sigma, alpha: float, q: float, s: float, theta: float, p: float,
                        fields=None) -> NormRatio:
    """||M_alpha g||_{q,s} / ||M_alpha d||_{q,s} over Omega."""
    f = _as_fields(u, F, sigma, p, fields)
    params = LorentzParams(q, s)
    in_window = 0 < q < q_window(theta, p, alpha, f.domain.n)
    if not in_window:
        warnings.warn(f"q = {q} outside (0, {q_window(theta, p, alpha, f.domain.n):.3g})",
                      QOutOfRange, stacklevel=2)
    mask = f.domain.interior_mask
    h = f.domain.h
    num = lorentz_quasinorm(f.Ma_g(alpha), params, h, mask)
    den = lorentz_quasinorm(f.Ma_d(alpha), params, h, mask)
    if den == 0:
        return NormRatio(math.nan, num, den, in_window, True)
    return NormRatio(num / den, num, den, in_window, False)


# comparison estimates ---------------------------------------------------------

def ball_count(dom: DiscreteDomain, center, radius: float) -> int:
    """Number of cell centers of the unbounded grid within ``radius`` of ``center``."""
    x = (np.asarray(center, float) - np.asarray(dom.origin, float)) / dom.h - 0.5
    rc = radius / dom.h
    axes = [np.arange(math.floor(xi - rc) - 1, math.ceil(xi + rc) + 2) - xi for xi in x]
    d2 = sum(np.meshgrid(*[a**2 for a in axes], indexing="ij"))
    return int(np.count_nonzero(d2 <= rc * rc * (1 + 1e-12)))


def _ball_average(vals: np.ndarray, ball: np.ndarray, dom: DiscreteDomain, count: int) -> float:
    """Integral over ball & Omega divided by the full discrete ball measure."""
    return float(np.sum(vals[ball & dom.interior_mask])) / count


def comparison_quotient(u, F, sigma, w, center, radius, p):
    """LHS and RHS of the comparison estimate on B_radius(center)."""
    dom = u.domain
    ball = ball_cells(dom, center, radius).mask
    inside = ball & dom.interior_mask
    gu = cell_power(gradient(u), p)
    gs = cell_power(gradient(sigma), p)
    gF = cell_power(F, p) if F is not None else np.zeros(dom.shape)
    gd = gradient(u).values - gradient(w).values
    diff = np.where(inside[..., None], gd, 0.0)
    diff = np.linalg.norm(np.nan_to_num(diff), axis=-1) ** p
    count = ball_count(dom, center, radius)
    avg = lambda v: _ball_average(v, ball, dom, count)
    lhs = avg(diff)
    rhs = avg(gF + gs) + avg(gu) ** ((p - 1) / p) * avg(gs) ** (1 / p)
    return lhs, rhs


def sample_interior_balls(dom: DiscreteDomain, count: int, rng, radii_cells=(2, 3, 4, 6)):
    """Centers and radii R with B_{2R} well inside Omega (cells and neighbours interior)."""
    from scipy.ndimage import distance_transform_edt
    centers = dom.cell_centers()
    out = []
    # distance (in cells) from each interior cell center to the nearest exterior cell center
    depth = distance_transform_edt(np.pad(dom.interior_mask, 1))[(slice(1, -1),) * dom.n]
    for rc in radii_cells:
        # every cell of the 2R-ball and its neighbours stays interior
        core = depth > 2 * rc + math.sqrt(dom.n)
        idx = np.argwhere(core)
        if len(idx):
            out.append((idx, rc))
    if not out:
        return []
    balls = []
    for _ in range(count):
        idx, rc = out[rng.integers(len(out))]
        c = idx[rng.integers(len(idx))]
        balls.append((tuple(centers[tuple(c)]), rc * dom.h))
    return balls


def sample_boundary_balls(dom: DiscreteDomain, count: int, rng, r0: float, radii_cells=(4, 8, 16)):
    """Boundary nodes x0 and radii R with 10R <= r0 (at least 4 cells across)."""
    nodes = dom.node_coords()[dom.boundary_node_mask]
    choices = [rc * dom.h / 10 for rc in radii_cells if rc * dom.h <= r0 * (1 + 1e-12)]
    if not choices:
        choices = [radii_cells[0] * dom.h / 10]
    return [(tuple(nodes[rng.integers(len(nodes))]), choices[rng.integers(len(choices))])
            for _ in range(count)]


@dataclass
class ComparisonAudit:
    rows: list = field(default_factory=list)
    C: float = 0.0
    C_train: float = 0.0
    heldout_violations: int = 0
    slack: float = 2.0

    @property
    def passed(self) -> bool:
        return math.isfinite(self.C) and self.heldout_violations == 0


def comparison_estimate_audit(u, F, sigma, op: OperatorSpec, n_interior: int = 50,
                              n_boundary: int = 20, seed: int = 0, r0: float = 0.5,
                              slack: float = 2.0, tol: float = DEFAULT_TOL) -> ComparisonAudit:
    """Solve the comparison problems on sampled balls and record LHS / RHS.

    The constant is fitted on the even-indexed balls and checked, with the
    given slack, on the odd-indexed ones.  Each row keeps its ``w`` so the
    solves can be reused for reverse Holder estimates.
    """
    dom = u.domain
    rng = np.random.default_rng(seed)
    audit = ComparisonAudit(slack=slack)
    for center, R in sample_interior_balls(dom, n_interior, rng):
        ball = ball_cells(dom, center, 2 * R)
        w = solve_comparison_interior(op, u, sigma, ball, tol)
        lhs, rhs = comparison_quotient(u, F, sigma, w, center, 2 * R, op.p)
        audit.rows.append(dict(kind="interior", center=center, R=R, radius=2 * R, lhs=lhs, rhs=rhs, w=w))
    for center, R in sample_boundary_balls(dom, n_boundary, rng, r0):
        w = solve_comparison_boundary(op, u, sigma, center, R, tol)
        lhs, rhs = comparison_quotient(u, F, sigma, w, center, 10 * R, op.p)
        audit.rows.append(dict(kind="boundary", center=center, R=R, radius=10 * R, lhs=lhs, rhs=rhs, w=w))
    for r in audit.rows:
        if r["rhs"] > 0:
            r["quotient"] = r["lhs"] / r["rhs"]
        else:
            r["quotient"] = 0.0 if r["lhs"] <= 1e-14 else math.inf
    q = np.array([r["quotient"] for r in audit.rows])
    audit.C = float(q.max(initial=0.0))
    audit.C_train = float(q[0::2].max(initial=0.0))
    audit.heldout_violations = int(np.sum(q[1::2] > slack * audit.C_train))
    return audit


def estimate_theta(corpus, p: float, budget: float = 1e3, offsets=THETA_OFFSETS):
    """Largest theta = p + offset whose reverse Holder ratios stay below ``budget``.

    ``corpus`` holds ``(w, center, radius)`` triples: A-harmonic ``w`` on the
    ball of that radius.  Ratios are taken at rho = radius and radius / 2.
    Returns ``(theta, table)`` with the worst ratio per candidate.
    """
    corpus = list(corpus)
    if len(corpus) < 10:
        raise CorpusTooSmall(f"need at least 10 solves, got {len(corpus)}")
    table = {}
    for off in offsets:
        theta = p + off
        worst = 0.0
        for w, center, radius in corpus:
            for rho in (radius, radius / 2):
                try:
                    worst = max(worst, reverse_holder_ratio(w, center, rho, theta, p))
                except (DegenerateData, ValidationError):
                    continue
        table[theta] = worst
    best = p + offsets[0]
    for theta in sorted(table):
        if table[theta] <= budget:
            best = theta
        else:
            break
    return best, table


# covering lemma ---------------------------------------------------------------

def _lattice_ball(rc: float, n: int) -> np.ndarray:
    m = int(math.floor(rc))
    idx = np.indices((2 * m + 1,) * n) - m
    return (np.sum(idx**2, axis=0) <= rc * rc * (1 + 1e-12)).astype(float)


def _ball_counts(mask: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.rint(fftconvolve(mask.astype(float), kernel, mode="same"))


@dataclass
class CoveringReport:
    hypothesis_i: bool
    hypothesis_ii: bool
    applicable: bool
    C_needed: float
    samples: int
    witness: tuple | None = None


def covering_lemma_audit(V: CellSet, W: CellSet, Q: tuple, eps: float, R1: float,
                         raise_on_violation: bool = True) -> CoveringReport:
    """Check the hypotheses of the covering lemma on the grid and report the constant.

    ``Q`` is ``(center, radius)``.  Hypothesis (ii) is tested at every cell
    center of the grid inside Q and every dyadic r = R1 / 2^j >= h, in the
    form B_r(x) & Q & Omega within W.
    """
    dom = V.domain
    n, h = dom.n, dom.h
    q_center, q_radius = Q
    if not (0 < eps < 1):
        raise ValidationError("eps must lie in (0, 1)")
    if not q_radius >= R1 > 0:
        raise ValidationError("need R >= R1 > 0")
    Qmask = ball_cells(dom, q_center, q_radius).mask
    if not (V.issubset(W) and np.all(~W.mask | Qmask)):
        raise ValidationError("need V within W within Q")
    cell = h**n
    count_R1 = _lattice_count(R1 / h, n)
    mV, mW = len(V) * cell, len(W) * cell
    hyp_i = mV < eps * count_R1 * cell
    forbidden = Qmask & dom.interior_mask & ~W.mask
    witness = None
    samples = 0
    r = R1
    # with V empty no ball is dense, so (ii) holds without scanning
    while mV > 0 and r >= h * (1 - 1e-12):
        kernel = _lattice_ball(r / h, n)
        hitsV = _ball_counts(V.mask, kernel)
        bad = _ball_counts(forbidden, kernel)
        dense = hitsV >= eps * kernel.sum()
        samples += int(Qmask.sum())
        viol = dense & (bad > 0) & Qmask
        if viol.any():
            idx = tuple(np.argwhere(viol)[0])
            witness = (tuple(dom.cell_centers()[idx].tolist()), r)
            break
        r /= 2
    if mV == 0:
        samples = int(Qmask.sum()) * (int(math.floor(math.log2(R1 / h) + 1e-12)) + 1)
    hyp_ii = witness is None
    C_needed = 0.0 if mV == 0 else (mV / (eps * mW) if mW > 0 else math.inf)
    report = CoveringReport(hyp_i, hyp_ii, hyp_i and hyp_ii, C_needed, samples, witness)
    if not hyp_ii and raise_on_violation:
        raise HypothesisViolated(witness)
    return report


def _lattice_count(rc: float, n: int) -> int:
    return int(_lattice_ball(rc, n).sum())


def covering_audit_sweep(report: ExperimentReport, dom: DiscreteDomain, R1: float | None = None,
                         raise_on_violation: bool = False):
    """Run the covering audit on every row of a sweep; Q is a ball around Omega."""
    centre = tuple(np.asarray(dom.origin) + 0.5 * np.asarray(dom.shape) * dom.h)
    R = dom.diam
    R1 = R1 or R
    out = []
    for row in report.rows:
        V = CellSet(dom, row["V"])
        W = CellSet(dom, row["W"])
        out.append(covering_lemma_audit(V, W, (centre, R), row["eps"], R1, raise_on_violation))
    return out
