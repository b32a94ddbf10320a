"""Partitions of the sample support: random grids, uniform grids and
Voronoi cells from weighted k-means, plus sample-to-region assignment.

Grid bins are half-open [lo, hi) with the last bin per dimension closed;
samples falling outside a grid's bounding box are clamped to the nearest
boundary region. Voronoi membership is nearest-centroid with ties broken
by the lowest centroid index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .core import DimensionMismatch, WeightedCloud, _as_generator

__all__ = [
    "PartitionKind",
    "Partition",
    "IndexSets",
    "balanced_bin_counts",
    "build_random_grid",
    "build_uniform_grid",
    "build_voronoi",
    "assign",
]


class PartitionKind(Enum):
    RANDOM_GRID = "random_grid"
    UNIFORM_GRID = "uniform_grid"
    VORONOI = "voronoi"


def balanced_bin_counts(m: int, active: np.ndarray) -> tuple:
    """Per-dimension bin counts whose product is the smallest value >= m
    achievable with counts as equal as possible.

    ``active`` marks dimensions with nonzero sample range; collapsed
    dimensions always get a single bin. Larger counts go to the earlier
    active dimensions (deterministic tie-break).
    """
    active = np.asarray(active, dtype=bool)
    k = int(np.sum(active))
    counts = np.ones(active.size, dtype=int)
    if k == 0 or m <= 1:
        return tuple(counts)
    if k == 1:
        counts[np.argmax(active)] = m
        return tuple(counts)
    base = max(1, int(np.floor(m ** (1.0 / k))))
    while (base + 1) ** k < m:  # guard against floating-point root error
        base += 1
    if base**k >= m:
        per = [base] * k
    else:
        per = None
        for j in range(1, k + 1):
            if (base + 1) ** j * base ** (k - j) >= m:
                per = [base + 1] * j + [base] * (k - j)
                break
    counts[active] = per
    return tuple(counts)


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint cover of the sample support with a membership function."""

    kind: PartitionKind
    dim: int
    requested: int
    edges: Optional[tuple] = None  # grids: per-dimension interior edges
    bin_counts: Optional[tuple] = None
    centroids: Optional[np.ndarray] = None  # voronoi
    degenerate: bool = False  # all dimensions collapsed; region count clamped to 1
    # centroids are exactly the build samples (m == n); querying those same
    # points maps each to its own region, immune to distance round-off
    self_assign: bool = False

    @property
    def n_regions(self) -> int:
        if self.kind is PartitionKind.VORONOI:
            return self.centroids.shape[0]
        return int(np.prod(self.bin_counts))

    def region_of(self, points: np.ndarray) -> np.ndarray:
        """Map an (n, d) array of points to region indices."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[1] != self.dim:
            raise DimensionMismatch(
                f"points have dimension {points.shape[1]}, partition has {self.dim}"
            )
        if self.kind is PartitionKind.VORONOI:
            if (
                self.self_assign
                and points.shape == self.centroids.shape
                and np.array_equal(points, self.centroids)
            ):
                return np.arange(points.shape[0], dtype=np.int64)
            return _nearest_centroid(points, self.centroids)
        idx = np.zeros(points.shape[0], dtype=np.int64)
        for i in range(self.dim):
            idx *= self.bin_counts[i]
            if self.bin_counts[i] > 1:
                idx += np.searchsorted(self.edges[i], points[:, i], side="right")
        return idx


@dataclass(frozen=True, eq=False)
class IndexSets:
    """Per-region sample index sets J_m, stored flat as a region id per sample."""

    region_ids: np.ndarray
    n_regions: int

    def __post_init__(self):
        ids = np.asarray(self.region_ids, dtype=np.int64)
        ids.setflags(write=False)
        object.__setattr__(self, "region_ids", ids)

    @property
    def n_samples(self) -> int:
        return self.region_ids.shape[0]

    @property
    def counts(self) -> np.ndarray:
        """|J_m| for every region (including empty ones)."""
        return np.bincount(self.region_ids, minlength=self.n_regions)

    def sets(self) -> list:
        """Materialize the J_m as index arrays (mostly for tests)."""
        order = np.argsort(self.region_ids, kind="stable")
        sorted_ids = self.region_ids[order]
        bounds = np.searchsorted(sorted_ids, np.arange(self.n_regions + 1))
        return [order[bounds[m] : bounds[m + 1]] for m in range(self.n_regions)]


def _sample_ranges(cloud: WeightedCloud):
    lo = cloud.samples.min(axis=0)
    hi = cloud.samples.max(axis=0)
    active = hi > lo
    return lo, hi, active


def _grid_partition(kind, cloud, m, edge_fn):
    if m < 1:
        raise ValueError("region count must be positive")
    lo, hi, active = _sample_ranges(cloud)
    degenerate = not active.any() and m > 1
    counts = balanced_bin_counts(1 if degenerate else m, active)
    edges = []
    for i in range(cloud.dim):
        if counts[i] > 1:
            edges.append(edge_fn(lo[i], hi[i], counts[i]))
        else:
            edges.append(np.empty(0))
    return Partition(
        kind=kind,
        dim=cloud.dim,
        requested=m,
        edges=tuple(edges),
        bin_counts=counts,
        degenerate=degenerate,
    )


def build_uniform_grid(cloud: WeightedCloud, m: int) -> Partition:
    """Deterministic grid with equally spaced edges over the sample range."""

    def edge_fn(lo, hi, count):
        return lo + (hi - lo) * np.arange(1, count) / count

    return _grid_partition(PartitionKind.UNIFORM_GRID, cloud, m, edge_fn)


def build_random_grid(cloud: WeightedCloud, m: int, rng) -> Partition:
    """Grid whose interior edges are sorted uniform draws inside the sample range."""
    gen = _as_generator(rng)

    def edge_fn(lo, hi, count):
        return np.sort(gen.uniform(lo, hi, size=count - 1))

    return _grid_partition(PartitionKind.RANDOM_GRID, cloud, m, edge_fn)


def build_voronoi(cloud: WeightedCloud, m: int, rng, max_iter: int = 50, tol: float = 1e-8) -> Partition:
    """Voronoi partition from weighted k-means (k-means++ seeding, Lloyd updates).

    With m equal to the sample count every sample becomes its own centroid,
    which makes the procedure proper: compression at that point is the
    identity.
    """
    if not 1 <= m <= cloud.n:
        raise ValueError("voronoi requires 1 <= m <= n")
    if m == cloud.n:
        centroids = cloud.samples.copy()
    else:
        weights = cloud.normalized if cloud.has_mass else np.full(cloud.n, 1.0 / cloud.n)
        centroids = _kmeans(cloud.samples, weights, m, _as_generator(rng), max_iter, tol)
    centroids.setflags(write=False)
    return Partition(
        kind=PartitionKind.VORONOI,
        dim=cloud.dim,
        requested=m,
        centroids=centroids,
        self_assign=m == cloud.n,
    )


def assign(partition: Partition, cloud: WeightedCloud) -> IndexSets:
    """Assign every sample of the cloud to exactly one region."""
    if cloud.dim != partition.dim:
        raise DimensionMismatch(
            f"cloud dimension {cloud.dim} does not match partition dimension {partition.dim}"
        )
    return IndexSets(partition.region_of(cloud.samples), partition.n_regions)


def _nearest_centroid(points, centroids, chunk=65536):
    out = np.empty(points.shape[0], dtype=np.int64)
    c_sq = 0.5 * np.sum(centroids * centroids, axis=1)
    cT = np.ascontiguousarray(centroids.T)
    buf = None
    for start in range(0, points.shape[0], chunk):
        block = points[start : start + chunk]
        if buf is None or buf.shape[0] != block.shape[0]:
            buf = np.empty((block.shape[0], centroids.shape[0]))
        # half squared distance up to a per-point constant; argmin breaks
        # ties at the lowest centroid index
        np.dot(block, cT, out=buf)
        np.subtract(c_sq[None, :], buf, out=buf)
        out[start : start + chunk] = np.argmin(buf, axis=1)
    return out


def _categorical_index(gen, probs):
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    return int(np.searchsorted(cdf, gen.random(), side="right"))


def _kmeans_pp_seed(samples, weights, m, gen):
    centroids = np.empty((m, samples.shape[1]))
    x_sq = np.sum(samples * samples, axis=1)
    centroids[0] = samples[_categorical_index(gen, weights)]

    def dist_sq(c):
        # |x - c|^2 without materializing (n, d) temporaries
        return np.maximum(x_sq - 2.0 * (samples @ c) + c @ c, 0.0)

    d2 = dist_sq(centroids[0])
    for j in range(1, m):
        p = weights * d2
        total = p.sum()
        if total <= 0.0:  # duplicates exhausted the spread; fall back to weights
            p = weights
        centroids[j] = samples[_categorical_index(gen, p)]
        np.minimum(d2, dist_sq(centroids[j]), out=d2)
    return centroids


def _kmeans(samples, weights, m, gen, max_iter, tol):
    n, d = samples.shape
    centroids = _kmeans_pp_seed(samples, weights, m, gen)
    span = float(np.max(samples.max(axis=0) - samples.min(axis=0)))
    scale = span if span > 0 else 1.0
    for _ in range(max_iter):
        labels = _nearest_centroid(samples, centroids)
        counts = np.bincount(labels, minlength=m)
        wsum = np.bincount(labels, weights=weights, minlength=m)
        new = np.empty_like(centroids)
        for j in range(d):
            new[:, j] = np.bincount(labels, weights=weights * samples[:, j], minlength=m)
        ok = wsum > 0
        new[ok] /= wsum[ok, None]
        # members but zero total weight: fall back to the unweighted mean
        flat = (~ok) & (counts > 0)
        if flat.any():
            for j in range(d):
                new[flat, j] = (
                    np.bincount(labels, weights=samples[:, j], minlength=m)[flat]
                    / counts[flat]
                )
        empty = counts == 0
        if empty.any():
            new[empty] = _reseed_empty(samples, weights, int(empty.sum()))
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        if shift <= tol * scale:
            break
    return centroids


def _reseed_empty(samples, weights, k):
    """Re-seed empty clusters at the k highest-weight samples (index-stable)."""
    order = np.argsort(-weights, kind="stable")
    return samples[order[:k]].copy()
