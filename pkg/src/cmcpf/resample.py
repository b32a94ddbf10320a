"""Resampling kernels over summary particles.

Multinomial resampling is the default (matching the independence
assumptions of the estimator proofs); systematic resampling exists for
ablations only; regularized resampling draws from Gaussian kernels
centered at the summaries with the region covariances.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .cmc import ProvenanceMismatch, SelectionMode, SummaryCloud
from .core import _as_generator

__all__ = [
    "ResampleMode",
    "ResamplePlan",
    "CovarianceNotSPD",
    "categorical_indices",
    "systematic_indices",
    "resample_multinomial",
    "resample_systematic",
    "resample_regularized",
    "resample",
]


class ResampleMode(Enum):
    MULTINOMIAL = "multinomial"
    SYSTEMATIC = "systematic"  # ablation only, not used in acceptance runs
    REGULARIZED = "regularized"


class CovarianceNotSPD(RuntimeError):
    """A kernel covariance failed its Cholesky factorization; with eps
    regularization in place this indicates a bug upstream."""


@dataclass(frozen=True)
class ResamplePlan:
    mode: ResampleMode = ResampleMode.MULTINOMIAL
    eps: float = 1e-6

    def __post_init__(self):
        if self.mode is ResampleMode.REGULARIZED and not self.eps > 0:
            raise ValueError("regularized resampling requires eps > 0")


def _normalized_probs(weights, n_items):
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_items,):
        raise ValueError("weight vector length does not match particle count")
    if np.any(w < 0) or not np.isfinite(w).all():
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights sum to zero")
    return w / total


def categorical_indices(rng, probs: np.ndarray, n: int) -> np.ndarray:
    """n independent categorical draws by inverse-CDF on one uniform each.

    Zero-probability categories have zero-width CDF intervals and are
    never selected.
    """
    gen = _as_generator(rng)
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, gen.random(n), side="right")
    return np.minimum(idx, probs.shape[0] - 1)


def systematic_indices(rng, probs: np.ndarray, n: int) -> np.ndarray:
    """Systematic (single-uniform) resampling indices."""
    gen = _as_generator(rng)
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    positions = (gen.random() + np.arange(n)) / n
    idx = np.searchsorted(cdf, positions, side="right")
    return np.minimum(idx, probs.shape[0] - 1)


def _spatial(sc: SummaryCloud):
    if sc.mode is SelectionMode.FUNCTION_SPECIFIC:
        raise ProvenanceMismatch("cannot resample states from integrand-space summaries")
    return sc.particles


def resample_multinomial(sc: SummaryCloud, n: int, rng, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Draw n states among the summary particles, multinomially.

    ``weights`` defaults to the summary weights; filters pass their
    reweighted (likelihood-updated) normalized weights instead.
    """
    particles = _spatial(sc)
    probs = _normalized_probs(sc.weights if weights is None else weights, sc.n_summaries)
    return particles[categorical_indices(rng, probs, n)].copy()


def resample_systematic(sc: SummaryCloud, n: int, rng, weights: Optional[np.ndarray] = None) -> np.ndarray:
    particles = _spatial(sc)
    probs = _normalized_probs(sc.weights if weights is None else weights, sc.n_summaries)
    return particles[systematic_indices(rng, probs, n)].copy()


def resample_regularized(sc: SummaryCloud, n: int, rng, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Draw n states from the Gaussian-kernel mixture centered at the
    summaries with the per-region covariances (Cholesky-based)."""
    particles = _spatial(sc)
    if sc.covariances is None:
        raise ValueError("summary cloud carries no region covariances")
    probs = _normalized_probs(sc.weights if weights is None else weights, sc.n_summaries)
    try:
        chol = np.linalg.cholesky(sc.covariances)
    except np.linalg.LinAlgError as err:
        raise CovarianceNotSPD(str(err)) from err
    gen = _as_generator(rng)
    idx = categorical_indices(gen, probs, n)
    z = gen.standard_normal((n, particles.shape[1]))
    return particles[idx] + np.einsum("nij,nj->ni", chol[idx], z)


def resample(sc: SummaryCloud, n: int, rng, plan: ResamplePlan, weights: Optional[np.ndarray] = None) -> np.ndarray:
    if plan.mode is ResampleMode.MULTINOMIAL:
        return resample_multinomial(sc, n, rng, weights)
    if plan.mode is ResampleMode.SYSTEMATIC:
        return resample_systematic(sc, n, rng, weights)
    return resample_regularized(sc, n, rng, weights)
