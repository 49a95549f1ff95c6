"""Deterministic random data (F, sigma) as truncated Fourier series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DiscreteDomain
from .errors import ValidationError
from .solver import GridFunction, VectorField


@dataclass(frozen=True)
class InstanceConfig:
    modes: int = 8
    amplitude: float = 1.0
    f_scale: float = 1.0
    sigma_scale: float = 1.0

    def __post_init__(self):
        if self.modes < 1:
            raise ValidationError("modes must be at least 1")
        if self.amplitude < 0:
            raise ValidationError("amplitude must be nonnegative")


class FourierSeries:
    """sum_k (a_k cos(2 pi k.x / L) + b_k sin(2 pi k.x / L)) / (1 + |k|^2), k in {0..m-1}^n."""

    def __init__(self, rng: np.random.Generator, modes: int, n: int, scale: float, length, origin):
        self.k = np.array(list(np.ndindex(*(modes,) * n)), dtype=float)
        decay = 1.0 / (1.0 + np.sum(self.k**2, axis=1))
        self.a = rng.standard_normal(len(self.k)) * decay * scale
        self.b = rng.standard_normal(len(self.k)) * decay * scale
        self.freq = 2 * np.pi * self.k / np.asarray(length, float)
        self.origin = np.asarray(origin, float)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        phase = (np.asarray(x, float) - self.origin) @ self.freq.T
        return np.cos(phase) @ self.a + np.sin(phase) @ self.b


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & (2**64 - 1))


def generate_instance(config: InstanceConfig | None, seed: int, dom: DiscreteDomain):
    """Return ``(F, sigma)`` on ``dom``; identical seeds give identical bytes."""
    config = config or InstanceConfig()
    rng = _rng(seed)
    n = dom.n
    length = np.asarray(dom.shape) * dom.h
    amp = config.amplitude
    sig = FourierSeries(rng, config.modes, n, amp * config.sigma_scale, length, dom.origin)
    comps = [FourierSeries(rng, config.modes, n, amp * config.f_scale, length, dom.origin)
             for _ in range(n)]
    F = VectorField.from_function(dom, lambda x: np.stack([c(x) for c in comps], axis=-1))
    mask = dom.interior_mask[..., None]
    F = VectorField(dom, np.where(mask, F.values, 0.0))
    sigma = GridFunction(dom, np.where(dom.active_node_mask, sig(dom.node_coords()), 0.0))
    return F, sigma
