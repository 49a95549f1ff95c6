"""Discrete laboratory for quasilinear elliptic regularity estimates.

Modules: :mod:`~reglab.domain` (grids and cell sets), :mod:`~reglab.solver`
(nonlinear Dirichlet problems), :mod:`~reglab.maximal_ops` (maximal operators),
:mod:`~reglab.lorentz`, :mod:`~reglab.capacity`, :mod:`~reglab.goodlambda`
(level-set experiments) and :mod:`~reglab.cli`.
"""
from .capacity import ThicknessParams, p_capacity, thickness_certificate
from .domain import (CellSet, DiscreteDomain, build_domain, diameter, extend_by_zero,
                     lebesgue_measure)
from .errors import *  # noqa: F401,F403
from .goodlambda import (ExperimentReport, GoodLambdaParams, comparison_estimate_audit,
                         covering_lemma_audit, estimate_theta, good_lambda_fractional_sweep,
                         good_lambda_sweep, norm_estimate_ratio)
from .instances import generate_instance
from .lorentz import LorentzParams, distribution_function, lorentz_quasinorm, weak_quasinorm
from .maximal_ops import (compose_mm_alpha, cutoff_maximal, fractional_maximal, maximal,
                      tail_maximal)
from .solver import (GridFunction, OperatorSpec, VectorField, energy_ratio, gradient,
                     reverse_holder_ratio, solve_comparison_boundary, solve_comparison_interior,
                     solve_dirichlet)

__version__ = "0.1.0"
