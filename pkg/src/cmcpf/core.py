"""Weighted-sample containers, weight normalization, ESS diagnostics and
importance-sampling estimators.

All weights are carried in the log domain and combined with log-sum-exp;
linear-domain weights only ever appear after normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "AllWeightsZero",
    "DimensionMismatch",
    "EvidenceEstimate",
    "RngStream",
    "WeightedCloud",
    "logsumexp",
    "normalize_weights",
    "is_estimate",
    "evidence_estimate",
    "ess_sum_of_squares",
    "ess_max_weight",
]


class AllWeightsZero(ValueError):
    """Every unnormalized weight is zero (all log-weights are -inf).

    Raised by estimators; filters catch the condition upstream, reset to
    uniform weights and flag the step instead.
    """


class DimensionMismatch(ValueError):
    """Sample dimension does not match the receiving structure."""


def logsumexp(log_values: np.ndarray) -> float:
    """Stable log(sum(exp(v))) with the max finite entry subtracted.

    Returns -inf when every entry is -inf.
    """
    log_values = np.asarray(log_values, dtype=float)
    m = np.max(log_values)
    if not np.isfinite(m):
        if m == -np.inf:
            return -np.inf
        raise ValueError("log values must not contain +inf or NaN")
    return float(m + np.log(np.sum(np.exp(log_values - m))))


def normalize_weights(log_weights: np.ndarray) -> np.ndarray:
    """Normalize unnormalized log-weights to linear weights summing to 1.

    Parameters
    ----------
    log_weights : (n,) array_like
        Unnormalized log-weights; entries may be -inf (zero weight).

    Returns
    -------
    (n,) ndarray of weights in [0, 1] summing to one.

    Raises
    ------
    AllWeightsZero
        If every entry is -inf.
    """
    log_weights = np.asarray(log_weights, dtype=float)
    if log_weights.size == 0:
        raise ValueError("empty weight vector")
    total = logsumexp(log_weights)
    if total == -np.inf:
        raise AllWeightsZero("all log-weights are -inf")
    w = np.exp(log_weights - total)
    return w / np.sum(w)


@dataclass(frozen=True, eq=False)
class RngStream:
    """Deterministic, splittable random stream.

    A stream is identified by a 64-bit seed plus a tuple key; ``child``
    derives sub-streams. Identical (seed, key) reproduces the identical
    draw sequence across runs and thread layouts because every call to
    ``generator`` constructs a fresh PCG64 from scratch.
    """

    seed: int
    key: tuple = ()

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")
        for k in self.key:
            if int(k) < 0:
                raise ValueError("stream key entries must be non-negative")

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence([int(self.seed), *map(int, self.key)])
        return np.random.Generator(np.random.PCG64(ss))


def _as_generator(rng) -> np.random.Generator:
    """Accept an RngStream or a ready numpy Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


@dataclass(frozen=True, eq=False)
class WeightedCloud:
    """Immutable cloud of n weighted samples in R^d.

    Parameters
    ----------
    samples : (n, d) ndarray
        Sample positions; a 1-D array is promoted to (n, 1).
    log_weights : (n,) ndarray, optional
        Unnormalized log-weights. Defaults to uniform (all zero).
        Entries may be -inf, which encodes indicator-constraint violation.
    """

    samples: np.ndarray
    log_weights: np.ndarray = None
    _normalized: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        samples = np.atleast_1d(np.asarray(self.samples, dtype=float))
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ValueError("samples must be a non-empty (n, d) array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if self.log_weights is None:
            log_w = np.zeros(samples.shape[0])
        else:
            log_w = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if log_w.shape[0] != samples.shape[0]:
            raise ValueError("log_weights length must match sample count")
        if np.any(np.isposinf(log_w)) or np.any(np.isnan(log_w)):
            raise ValueError("log_weights must not contain +inf or NaN")
        samples = samples.copy()
        log_w = log_w.copy()
        samples.setflags(write=False)
        log_w.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "log_weights", log_w)
        if np.any(np.isfinite(log_w)):
            norm = normalize_weights(log_w)
            norm.setflags(write=False)
        else:
            norm = None
        object.__setattr__(self, "_normalized", norm)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def has_mass(self) -> bool:
        """True unless every weight is zero."""
        return self._normalized is not None

    @property
    def normalized(self) -> np.ndarray:
        """Normalized weights summing to one."""
        if self._normalized is None:
            raise AllWeightsZero("all log-weights are -inf")
        return self._normalized


@dataclass(frozen=True, eq=False)
class EvidenceEstimate:
    """Marginal-likelihood estimate, optionally split into per-region terms.

    ``z_hat`` is (1/n) of the summed unnormalized weights; when region
    terms are present their sum reproduces ``z_hat`` with no loss.
    """

    log_z: float
    log_terms: Optional[np.ndarray] = None

    @property
    def z_hat(self) -> float:
        return math.exp(self.log_z) if self.log_z > -np.inf else 0.0

    @property
    def terms(self) -> Optional[np.ndarray]:
        if self.log_terms is None:
            return None
        return np.exp(self.log_terms)


def is_estimate(cloud: WeightedCloud, h: Callable[[np.ndarray], np.ndarray]) -> float:
    """Self-normalized importance-sampling estimate of E[h(X)].

    ``h`` must be vectorized over rows: it maps the (n, d) sample array to
    an (n,) array of values.
    """
    values = np.asarray(h(cloud.samples), dtype=float).reshape(-1)
    if values.shape[0] != cloud.n:
        raise ValueError("h must return one value per sample")
    return float(np.dot(cloud.normalized, values))


def evidence_estimate(cloud: WeightedCloud) -> EvidenceEstimate:
    """Unbiased marginal-likelihood estimate (1/n) * sum of weights."""
    if not cloud.has_mass:
        return EvidenceEstimate(log_z=-np.inf)
    return EvidenceEstimate(log_z=logsumexp(cloud.log_weights) - math.log(cloud.n))


def ess_sum_of_squares(normalized_weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights."""
    w = np.asarray(normalized_weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def ess_max_weight(normalized_weights: np.ndarray) -> float:
    """Effective sample size 1 / max(w) of normalized weights."""
    w = np.asarray(normalized_weights, dtype=float)
    return float(1.0 / np.max(w))
