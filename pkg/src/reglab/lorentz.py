"""Distribution functions and Lorentz L^{q,s} quasinorms of cell functions.

A cell function takes finitely many values, so its distribution function
mu(lam) = |{|f| > lam}| is a right-continuous step function and

    ||f||_{q,s}^s = q * int_0^inf lam^s mu(lam)^{s/q} dlam / lam
                  = q * sum_j M_j^{s/q} (v_j^s - v_{j-1}^s) / s

with v_1 < ... < v_m the distinct positive values of |f|, v_0 = 0 and
M_j = |{|f| >= v_j}|.  No quadrature is involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import AmbientField
from .errors import InvalidParams, ValidationError


@dataclass(frozen=True)
class LorentzParams:
    q: float
    s: float = math.inf

    def __post_init__(self):
        if not self.q > 0 or not math.isfinite(self.q):
            raise InvalidParams(f"q must be a positive real, got {self.q}")
        if not self.s > 0 or math.isnan(self.s):
            raise InvalidParams(f"s must be positive or inf, got {self.s}")


def _cells(f, h, mask):
    """Values of |f| on the measured cells and the measure of one cell."""
    if isinstance(f, AmbientField):
        h = f.h
        if mask is None:
            mask = f.domain_mask
        f = f.values
    elif hasattr(f, "values") and hasattr(f, "domain"):
        h = f.domain.h
        mask = f.domain.interior_mask if mask is None else mask
        f = f.values
    if h is None:
        raise ValidationError("grid spacing h is required for plain arrays")
    vals = np.abs(np.asarray(f, dtype=float))
    if mask is not None:
        vals = vals[np.asarray(mask, bool)]
    return vals.ravel(), float(h) ** np.ndim(f)


def level_table(f, h: float | None = None, mask=None):
    """Distinct positive values v_j of |f| and M_j = |{|f| >= v_j}|."""
    vals, cell = _cells(f, h, mask)
    v, counts = np.unique(vals[vals > 0], return_counts=True)
    at_least = np.cumsum(counts[::-1])[::-1]
    return v, at_least * cell


def distribution_function(f, lam: float, h: float | None = None, mask=None) -> float:
    """|{x : |f(x)| > lam}| by cell counting."""
    if not lam > 0:
        raise ValidationError("lambda must be positive")
    vals, cell = _cells(f, h, mask)
    return float(np.count_nonzero(vals > lam)) * cell


def distribution_table(f, lams, h: float | None = None, mask=None) -> np.ndarray:
    vals, cell = _cells(f, h, mask)
    srt = np.sort(vals)
    return (len(srt) - np.searchsorted(srt, np.asarray(lams, float), side="right")) * cell


def weak_quasinorm(f, q: float, h: float | None = None, mask=None) -> float:
    """sup_lam lam * mu(lam)^{1/q}, attained just below a value of |f|."""
    if not q > 0:
        raise InvalidParams(f"q must be positive, got {q}")
    v, M = level_table(f, h, mask)
    if len(v) == 0:
        return 0.0
    return float(np.max(v * M ** (1.0 / q)))


def lorentz_quasinorm(f, params: LorentzParams | tuple, h: float | None = None, mask=None) -> float:
    if not isinstance(params, LorentzParams):
        params = LorentzParams(*params)
    q, s = params.q, params.s
    if math.isinf(s):
        return weak_quasinorm(f, q, h, mask)
    v, M = level_table(f, h, mask)
    if len(v) == 0:
        return 0.0
    # normalise by the largest value so v^s cannot overflow or underflow
    top = v[-1]
    w = v / top
    steps = np.diff(np.concatenate(([0.0], w**s)))
    total = q / s * math.fsum((M ** (s / q) * steps).tolist())
    return float(top * total ** (1.0 / s))


def lq_norm(f, q: float, h: float | None = None, mask=None) -> float:
    """(sum |f|^q h^n)^{1/q}, for comparison with the L^{q,q} quasinorm."""
    vals, cell = _cells(f, h, mask)
    top = float(np.max(vals, initial=0.0))
    if top == 0:
        return 0.0
    # normalise by the largest value so |f|^q cannot overflow or underflow
    return top * math.fsum(((vals / top) ** q).tolist()) ** (1 / q) * cell ** (1 / q)
