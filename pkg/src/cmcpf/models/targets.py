"""Static target densities for the compression benchmark, with closed-form
raw moments used as RMSE ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import _as_generator

__all__ = [
    "GammaTarget",
    "MixtureTarget",
    "gaussian_raw_moment",
    "gamma_moments",
    "mixture_moments",
]


def gaussian_raw_moment(mean: float, var: float, k: int) -> float:
    """E[X^k] for X ~ N(mean, var), via the central-moment expansion."""
    total = 0.0
    for j in range(0, k // 2 + 1):
        double_fact = 1.0
        for i in range(2 * j - 1, 0, -2):
            double_fact *= i
        total += math.comb(k, 2 * j) * double_fact * var**j * mean ** (k - 2 * j)
    return total


@dataclass(frozen=True)
class GammaTarget:
    """Gamma density on x > 0 with shape 4 and scale 0.5 by default."""

    shape: float = 4.0
    scale: float = 0.5

    def sample(self, n: int, rng) -> np.ndarray:
        gen = _as_generator(rng)
        return gen.gamma(self.shape, self.scale, size=n)[:, None]

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        norm = math.gamma(self.shape) * self.scale**self.shape
        out[pos] = x[pos] ** (self.shape - 1) * np.exp(-x[pos] / self.scale) / norm
        return out

    def raw_moment(self, k: int) -> float:
        value = self.scale**k
        for i in range(k):
            value *= self.shape + i
        return value


@dataclass(frozen=True)
class MixtureTarget:
    """Two-component Gaussian mixture: 0.5 N(-2, 1) + 0.5 N(4, 0.25)."""

    weights: tuple = (0.5, 0.5)
    means: tuple = (-2.0, 4.0)
    variances: tuple = (1.0, 0.25)

    def sample(self, n: int, rng) -> np.ndarray:
        gen = _as_generator(rng)
        comp = (gen.random(n) >= self.weights[0]).astype(int)
        mu = np.asarray(self.means)[comp]
        sd = np.sqrt(np.asarray(self.variances))[comp]
        return (mu + sd * gen.standard_normal(n))[:, None]

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, mu, var in zip(self.weights, self.means, self.variances):
            out += w * np.exp(-0.5 * (x - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)
        return out

    def raw_moment(self, k: int) -> float:
        return sum(
            w * gaussian_raw_moment(mu, var, k)
            for w, mu, var in zip(self.weights, self.means, self.variances)
        )


def gamma_moments(k: int) -> float:
    """First five raw moments of the benchmark Gamma target."""
    if not 1 <= k <= 5:
        raise ValueError("moment order must be in 1..5")
    return GammaTarget().raw_moment(k)


def mixture_moments(k: int) -> float:
    """First five raw moments of the benchmark mixture target."""
    if not 1 <= k <= 5:
        raise ValueError("moment order must be in 1..5")
    return MixtureTarget().raw_moment(k)
