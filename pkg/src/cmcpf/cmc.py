"""Compression of a weighted cloud into summary particles.

A partition's index sets turn n weighted samples into M' <= M summary
particles: each nonempty region keeps its total normalized weight, its
evidence share (accumulated in the log domain), and one representative
point chosen stochastically, as the within-region weighted mean, or as a
within-region estimate of a specific integrand. Empty regions and regions
whose weight underflows to zero are dropped, so summary weights always sum
to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core import (
    AllWeightsZero,
    EvidenceEstimate,
    WeightedCloud,
    _as_generator,
    logsumexp,
)
from .partition import IndexSets

__all__ = [
    "SelectionMode",
    "ProvenanceMismatch",
    "PartialWeights",
    "SummaryCloud",
    "SummaryWeights",
    "summary_weights",
    "partial_weights",
    "select_stochastic",
    "select_weighted_mean",
    "select_function_specific",
    "cmc_estimate",
    "region_covariances",
    "compress",
]


class SelectionMode(Enum):
    STOCHASTIC = "stochastic"
    WEIGHTED_MEAN = "weighted_mean"
    FUNCTION_SPECIFIC = "function_specific"


class ProvenanceMismatch(ValueError):
    """A function-specific summary was used where state-space points are needed
    (or vice versa): its particles live in integrand space, not in R^d."""


class SummaryWeights(NamedTuple):
    weights: np.ndarray  # normalized region weights, sum to 1
    log_evidence: np.ndarray  # per-region log evidence share
    regions: np.ndarray  # retained region ids, increasing


@dataclass(frozen=True, eq=False)
class PartialWeights:
    """Within-region normalized weights, flat-aligned with the cloud samples.

    ``values[i]`` is the weight of sample i inside its own region (zero when
    the sample's region was dropped); each retained region's values sum to 1.
    """

    values: np.ndarray
    region_ids: np.ndarray
    regions: np.ndarray

    def region_values(self, region: int) -> np.ndarray:
        return self.values[self.region_ids == region]


@dataclass(frozen=True, eq=False)
class SummaryCloud:
    """M' summary particles with normalized weights and evidence shares.

    ``particles`` is (M', d) for spatial selections and (M',) for
    function-specific selection, whose entries are integrand values.
    """

    particles: np.ndarray
    weights: np.ndarray
    log_region_evidence: np.ndarray
    mode: SelectionMode
    regions: np.ndarray
    covariances: Optional[np.ndarray] = None

    @property
    def n_summaries(self) -> int:
        return self.particles.shape[0]

    @property
    def dim(self) -> int:
        if self.mode is SelectionMode.FUNCTION_SPECIFIC:
            raise ProvenanceMismatch("function-specific summaries have no state dimension")
        return self.particles.shape[1]

    @property
    def region_evidence(self) -> np.ndarray:
        return np.exp(self.log_region_evidence)

    def evidence(self) -> EvidenceEstimate:
        """Evidence reassembled from the region shares (lossless)."""
        return EvidenceEstimate(
            log_z=logsumexp(self.log_region_evidence),
            log_terms=self.log_region_evidence.copy(),
        )


class _RegionStats(NamedTuple):
    regions: np.ndarray  # retained region ids
    weights: np.ndarray  # normalized region weights over retained regions
    log_evidence: np.ndarray  # log evidence share per retained region
    pw: np.ndarray  # flat within-region weights, 0 outside retained regions
    compact: np.ndarray  # per-sample retained-region position, -1 if dropped


def _region_stats(cloud: WeightedCloud, idx: IndexSets) -> _RegionStats:
    if idx.n_samples != cloud.n:
        raise ValueError("index sets were built for a different cloud size")
    rid = idx.region_ids
    n_regions = idx.n_regions
    wbar = cloud.normalized  # raises AllWeightsZero on a massless cloud
    log_w = cloud.log_weights

    a_hat = np.bincount(rid, weights=wbar, minlength=n_regions)
    regions = np.flatnonzero(a_hat > 0.0)
    if regions.size == 0:
        raise AllWeightsZero("no region retained any weight")

    # per-region log-sum-exp of member log-weights
    gmax = np.full(n_regions, -np.inf)
    np.maximum.at(gmax, rid, log_w)
    ok = gmax[rid] > -np.inf
    shifted = np.zeros(cloud.n)
    shifted[ok] = np.exp(log_w[ok] - gmax[rid[ok]])
    ssum = np.bincount(rid, weights=shifted, minlength=n_regions)

    pw = np.zeros(cloud.n)
    pw[ok] = shifted[ok] / ssum[rid[ok]]

    compact = np.full(n_regions, -1, dtype=np.int64)
    compact[regions] = np.arange(regions.size)
    log_evidence = gmax[regions] + np.log(ssum[regions]) - math.log(cloud.n)
    sample_compact = compact[rid]
    dropped = sample_compact < 0
    if dropped.any():  # regions whose weight underflowed away carry none
        pw[dropped] = 0.0
    return _RegionStats(regions, a_hat[regions], log_evidence, pw, sample_compact)


def summary_weights(cloud: WeightedCloud, idx: IndexSets) -> SummaryWeights:
    """Normalized region weights and per-region evidence shares.

    The weights are the summed normalized sample weights per region; the
    evidence shares are (1/n) of the summed unnormalized weights, kept in
    the log domain. Empty regions are omitted.
    """
    st = _region_stats(cloud, idx)
    return SummaryWeights(st.weights, st.log_evidence, st.regions)


def partial_weights(cloud: WeightedCloud, idx: IndexSets) -> PartialWeights:
    """Within-region normalized weights for every sample."""
    st = _region_stats(cloud, idx)
    return PartialWeights(values=st.pw, region_ids=idx.region_ids, regions=st.regions)


def _member_order(idx: IndexSets, regions: np.ndarray):
    """Sample indices grouped by region (stable order), with group bounds."""
    order = np.argsort(idx.region_ids, kind="stable")
    sorted_ids = idx.region_ids[order]
    lo = np.searchsorted(sorted_ids, regions, side="left")
    hi = np.searchsorted(sorted_ids, regions, side="right")
    return order, lo, hi


def _stochastic_particles(cloud, idx, st, pw_values, gen):
    u = gen.random(st.regions.size)
    order, lo, hi = _member_order(idx, st.regions)
    chosen = np.empty(st.regions.size, dtype=np.int64)
    for k in range(st.regions.size):
        members = order[lo[k] : hi[k]]
        cdf = np.cumsum(pw_values[members])
        j = np.searchsorted(cdf, u[k] * cdf[-1], side="right")
        chosen[k] = members[min(j, members.size - 1)]
    return cloud.samples[chosen].copy()


def _weighted_means(cloud, st, pw_values):
    m = st.regions.size
    keep = st.compact >= 0
    cw = st.compact[keep]
    vals = pw_values[keep]
    s = np.empty((m, cloud.dim))
    x = cloud.samples
    for j in range(cloud.dim):
        s[:, j] = np.bincount(cw, weights=vals * x[keep, j], minlength=m)
    return s


def _function_values(cloud, st, pw_values, h):
    values = np.asarray(h(cloud.samples), dtype=float).reshape(-1)
    if values.shape[0] != cloud.n:
        raise ValueError("h must return one value per sample")
    keep = st.compact >= 0
    return np.bincount(
        st.compact[keep], weights=pw_values[keep] * values[keep], minlength=st.regions.size
    )


def _covariances(cloud, st, pw_values, eps):
    s = _weighted_means(cloud, st, pw_values)
    m, d = s.shape
    keep = st.compact >= 0
    cw = st.compact[keep]
    vals = pw_values[keep]
    centered = cloud.samples[keep] - s[cw]
    cov = np.empty((m, d, d))
    for j in range(d):
        for k in range(j, d):
            v = np.bincount(cw, weights=vals * centered[:, j] * centered[:, k], minlength=m)
            cov[:, j, k] = v
            cov[:, k, j] = v
    cov += eps * np.eye(d)
    return cov


def select_stochastic(cloud: WeightedCloud, idx: IndexSets, pw: PartialWeights, rng) -> SummaryCloud:
    """Draw each summary particle among its region's samples.

    One uniform variate is consumed per retained region, in region order,
    so the selection is a pure function of (cloud, idx, rng).
    """
    st = _region_stats(cloud, idx)
    particles = _stochastic_particles(cloud, idx, st, pw.values, _as_generator(rng))
    return SummaryCloud(
        particles=particles,
        weights=st.weights,
        log_region_evidence=st.log_evidence,
        mode=SelectionMode.STOCHASTIC,
        regions=st.regions,
    )


def select_weighted_mean(cloud: WeightedCloud, idx: IndexSets, pw: PartialWeights) -> SummaryCloud:
    """Deterministic selection: each summary is its region's weighted mean,
    which keeps it inside the convex hull of the region's samples."""
    st = _region_stats(cloud, idx)
    return SummaryCloud(
        particles=_weighted_means(cloud, st, pw.values),
        weights=st.weights,
        log_region_evidence=st.log_evidence,
        mode=SelectionMode.WEIGHTED_MEAN,
        regions=st.regions,
    )


def select_function_specific(
    cloud: WeightedCloud, idx: IndexSets, pw: PartialWeights, h: Callable
) -> SummaryCloud:
    """Selection tuned to one integrand: each summary is the region's
    weighted estimate of h, so the ensemble reproduces the full-cloud
    estimate of E[h] exactly."""
    st = _region_stats(cloud, idx)
    return SummaryCloud(
        particles=_function_values(cloud, st, pw.values, h),
        weights=st.weights,
        log_region_evidence=st.log_evidence,
        mode=SelectionMode.FUNCTION_SPECIFIC,
        regions=st.regions,
    )


def cmc_estimate(sc: SummaryCloud, h: Optional[Callable] = None) -> float:
    """Weighted-summary estimate of E[h(X)].

    For function-specific summaries ``h`` must be omitted (the particles
    already are integrand values); passing a function there raises
    ProvenanceMismatch. For spatial summaries ``h`` maps the (M', d)
    particle array to (M',) values; ``h=None`` is the identity and is only
    valid for one-dimensional states.
    """
    if sc.mode is SelectionMode.FUNCTION_SPECIFIC:
        if h is not None:
            raise ProvenanceMismatch(
                "function-specific summaries admit only the identity mapping"
            )
        values = sc.particles
    elif h is None:
        if sc.particles.shape[1] != 1:
            raise ValueError("h=None (identity) requires one-dimensional states")
        values = sc.particles[:, 0]
    else:
        values = np.asarray(h(sc.particles), dtype=float).reshape(-1)
        if values.shape[0] != sc.n_summaries:
            raise ValueError("h must return one value per summary particle")
    return float(np.dot(sc.weights, values))


def region_covariances(
    cloud: WeightedCloud, idx: IndexSets, pw: PartialWeights, eps: float
) -> np.ndarray:
    """Weighted within-region covariances around the weighted-mean summary,
    regularized with eps * I so every matrix is symmetric positive definite."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    st = _region_stats(cloud, idx)
    return _covariances(cloud, st, pw.values, eps)


def compress(
    cloud: WeightedCloud,
    idx: IndexSets,
    mode: SelectionMode = SelectionMode.WEIGHTED_MEAN,
    rng=None,
    h: Optional[Callable] = None,
    with_covariances: bool = False,
    eps: float = 1e-6,
) -> SummaryCloud:
    """One-call compression: region weights plus the chosen selection rule,
    sharing a single pass over the cloud."""
    st = _region_stats(cloud, idx)
    if mode is SelectionMode.STOCHASTIC:
        if rng is None:
            raise ValueError("stochastic selection needs an rng")
        particles = _stochastic_particles(cloud, idx, st, st.pw, _as_generator(rng))
    elif mode is SelectionMode.WEIGHTED_MEAN:
        particles = _weighted_means(cloud, st, st.pw)
    elif mode is SelectionMode.FUNCTION_SPECIFIC:
        if h is None:
            raise ValueError("function-specific selection needs the integrand h")
        if with_covariances:
            raise ProvenanceMismatch("covariances are undefined in integrand space")
        particles = _function_values(cloud, st, st.pw, h)
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    cov = _covariances(cloud, st, st.pw, eps) if with_covariances else None
    return SummaryCloud(
        particles=particles,
        weights=st.weights,
        log_region_evidence=st.log_evidence,
        mode=mode,
        regions=st.regions,
        covariances=cov,
    )
