"""Instance construction shared by the CLI, the benchmarks and the tests."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DiscreteDomain, build_domain
from .errors import DegenerateData, ValidationError
from .goodlambda import InstanceFields
from .instances import InstanceConfig, generate_instance
from .solver import (DEFAULT_TOL, GridFunction, OperatorSpec, VectorField, energy_ratio,
                     solve_dirichlet)


def sinsin(x):
    return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def sinsin_grad(x):
    s0, s1 = np.sin(np.pi * x[..., 0]), np.sin(np.pi * x[..., 1])
    c0, c1 = np.cos(np.pi * x[..., 0]), np.cos(np.pi * x[..., 1])
    return np.stack([np.pi * c0 * s1, np.pi * s0 * c1], axis=-1)


def make_data(dom: DiscreteDomain, kind: str = "fourier", seed: int = 0,
              config: InstanceConfig | None = None):
    """(F, sigma, exact) for a data kind; ``exact`` is None unless known."""
    if kind == "fourier":
        F, sigma = generate_instance(config, seed, dom)
        return F, sigma, None
    if kind == "manufactured":
        if dom.n != 2:
            raise ValidationError("the manufactured solution is two-dimensional")
        F = VectorField.from_function(dom, sinsin_grad)
        return F, GridFunction.from_function(dom, sinsin), sinsin
    if kind == "zero":
        return VectorField.zeros(dom), GridFunction(dom, np.zeros(dom.node_shape)), lambda x: 0 * x[..., 0]
    if kind == "affine":
        exact = lambda x: x[..., 0].copy()
        return VectorField.zeros(dom), GridFunction.from_function(dom, exact), exact
    raise ValidationError(f"unknown data kind {kind!r}")


@dataclass
class SolvedInstance:
    domain: DiscreteDomain
    op: OperatorSpec
    F: VectorField
    sigma: GridFunction
    u: GridFunction
    seed: int
    exact: object = None
    _fields: InstanceFields | None = field(default=None, repr=False)

    @property
    def p(self) -> float:
        return self.op.p

    @property
    def fields(self) -> InstanceFields:
        if self._fields is None:
            self._fields = InstanceFields.from_solution(self.u, self.F, self.sigma, self.p)
        return self._fields

    @property
    def energy_ratio(self) -> float:
        try:
            return energy_ratio(self.u, self.F, self.sigma, self.p)
        except DegenerateData:
            return float("nan")

    @property
    def meta(self) -> dict:
        return dict(p=self.p, domain=self.domain.name, h=self.domain.h, seed=self.seed)


def solve_instance(shape, N: int, p: float, kind: str = "fourier", seed: int = 0,
                   form: str = "canonical", config: InstanceConfig | None = None,
                   tol: float = DEFAULT_TOL) -> SolvedInstance:
    """Domain at h = 1/N (relative to the unit length), data, and the solve."""
    dom = build_domain(shape, 1.0 / N)
    op = OperatorSpec(p, form)
    F, sigma, exact = make_data(dom, kind, seed, config)
    u = solve_dirichlet(op, F, sigma, dom, tol)
    return SolvedInstance(dom, op, F, sigma, u, seed, exact)
