"""Empirical constants of maximal-function inequalities on a grid."""
from __future__ import annotations

import numpy as np

from . import maximal_ops as mx
from .lorentz import LorentzParams, level_table, lorentz_quasinorm


def weak_type_constant(f: np.ndarray, h: float) -> float:
    """sup_lam lam |{M f > lam}| / ||f||_1 over the grid."""
    f = np.abs(np.asarray(f, float))
    l1 = float(f.sum()) * h**f.ndim
    if l1 == 0:
        return 0.0
    v, meas = level_table(mx.maximal(f, h), h)
    return float(np.max(v * meas)) / l1


def cutoff_composition_constant(f: np.ndarray, r: float, alpha: float, h: float) -> float:
    """max_x M^r M^r_alpha f(x) / M^{2r}_alpha f(x) (points with a zero denominator skipped)."""
    lhs = mx.cutoff_maximal(mx.cutoff_maximal(f, r, alpha, h), r, 0.0, h)
    rhs = mx.cutoff_maximal(f, 2 * r, alpha, h)
    ok = rhs > 0
    if not ok.any():
        return 0.0
    return float(np.max(lhs[ok] / rhs[ok]))


def localized_weak_constant(f: np.ndarray, ball: np.ndarray, alpha: float, h: float) -> float:
    """sup_lam |{M_alpha(chi_B f) > lam}| / (int_B |f| / lam)^{n/(n-alpha)}."""
    f = np.where(ball, np.abs(np.asarray(f, float)), 0.0)
    n = f.ndim
    mass = float(f.sum()) * h**n
    if mass == 0:
        return 0.0
    v, meas = level_table(mx.fractional_maximal(f, alpha, h), h)
    return float(np.max(meas * (v / mass) ** (n / (n - alpha))))


def lorentz_bound_constant(f: np.ndarray, h: float, q: float, s: float, mask=None) -> float:
    """||M f||_{q,s} / ||f||_{q,s} with both norms over ``mask``."""
    params = LorentzParams(q, s)
    den = lorentz_quasinorm(f, params, h, mask)
    if den == 0:
        return 0.0
    return lorentz_quasinorm(mx.maximal(f, h), params, h, mask) / den


def fractional_lorentz_ratio(g, d, alpha, params: LorentzParams, h, mask):
    """||M_alpha g|| / ||M_alpha d|| in L^{q,s}(mask)."""
    num = lorentz_quasinorm(mx.fractional_maximal(g, alpha, h), params, h, mask)
    den = lorentz_quasinorm(mx.fractional_maximal(d, alpha, h), params, h, mask)
    return num / den if den else float("nan")
