"""Particle filters: the standard bootstrap filter, the compressed
bootstrap filter, and the generic compressed filter with an ESS-gated
resampling step.

The compressed filters evaluate the likelihood only at the summary
particles, so their per-step evaluation budget is the effective summary
count, not the particle count. All three filters consume purpose-keyed
sub-streams `(step, purpose)` of one seeded stream; filters that share a
seed therefore draw identical propagation and resampling noise, which is
what makes the compression-is-identity degeneration checks exact.

Evidence bookkeeping: the bootstrap filter keeps the running evidence in
its unnormalized weights (flat-reset to the current estimate at every
resampling); the compressed filters accumulate the per-step normalizer of
their summary weights. Both reduce to the same estimator when compression
is the identity. A step where every weight is zero flags the trace,
resets to uniform weights, and pins the reported evidence at -inf from
that step on.
"""

from __future__ import annotations

import math
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .cmc import SelectionMode, SummaryCloud, compress
from .core import (
    RngStream,
    WeightedCloud,
    ess_max_weight,
    ess_sum_of_squares,
    logsumexp,
)
from .partition import (
    PartitionKind,
    assign,
    build_random_grid,
    build_uniform_grid,
    build_voronoi,
)
from .resample import ResampleMode, ResamplePlan, categorical_indices, resample

__all__ = [
    "Algorithm",
    "EssKind",
    "AdaptiveM",
    "FilterConfig",
    "FilterTrace",
    "StateSpaceModel",
    "ModelDimensionMismatch",
    "DivisibilityViolation",
    "adaptive_summary_count",
    "posterior_mean",
    "run_bpf",
    "run_cbpf",
    "run_generic_cpf",
    "run_filter",
]

# purpose codes for per-step rng sub-streams
_INIT, _PROPAGATE, _PARTITION, _SELECT, _RESAMPLE = 0, 1, 2, 3, 4


class Algorithm(Enum):
    BPF = "bpf"
    CBPF = "cbpf"
    GENERIC_CPF = "gcpf"


class EssKind(Enum):
    SUM_OF_SQUARES = "sumsq"
    MAX_WEIGHT = "max"


_ESS_FN = {
    EssKind.SUM_OF_SQUARES: ess_sum_of_squares,
    EssKind.MAX_WEIGHT: ess_max_weight,
}


class ModelDimensionMismatch(ValueError):
    """Model outputs do not match its declared state dimension."""


class DivisibilityViolation(ValueError):
    """The generic compressed filter needs the particle count to be a
    multiple of the summary count."""


class StateSpaceModel(ABC):
    """Interface a filterable model must provide.

    All methods are batch-vectorized over particles: states are (n, d)
    arrays. ``log_likelihood`` may return -inf entries (constraint
    violations); the filters count one likelihood evaluation per state row
    passed to it.
    """

    state_dim: int
    obs_dim: int = 1

    @abstractmethod
    def sample_initial(self, n: int, rng) -> np.ndarray:
        """Draw n initial states, shape (n, d)."""

    @abstractmethod
    def sample_transition(self, states: np.ndarray, t: int, rng) -> np.ndarray:
        """Propagate (n, d) states from step t-1 to step t."""

    @abstractmethod
    def log_likelihood(self, states: np.ndarray, observation, t: int) -> np.ndarray:
        """Log-likelihood of the step-t observation under each state, shape (n,)."""

    def sample_observation(self, state: np.ndarray, t: int, rng) -> np.ndarray:
        """Draw one observation for a single state (data generation only)."""
        raise NotImplementedError

    def simulate_transition(self, state: np.ndarray, t: int, rng) -> np.ndarray:
        """Single-trajectory transition used by data generation; models with
        hard constraints may override it to keep ground truth feasible."""
        return self.sample_transition(state[None, :], t, rng)[0]


@dataclass(frozen=True)
class AdaptiveM:
    """Schedule the summary count from the latest weight-degeneracy signal."""

    gamma: float
    m_min: int = 1

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.m_min < 1:
            raise ValueError("m_min must be at least 1")


def adaptive_summary_count(ess: float, gamma: float, m_min: int, n_max: int) -> int:
    """max(floor(gamma * floor(ess)), m_min), clamped above by n_max."""
    m = int(math.floor(gamma * math.floor(ess)))
    return min(max(m, int(m_min)), int(n_max))


@dataclass
class FilterConfig:
    algorithm: Algorithm
    n_particles: int
    n_summaries: Optional[int] = None  # defaults to n_particles
    eta: float = 0.5
    ess: EssKind = EssKind.SUM_OF_SQUARES
    partition_rule: PartitionKind = PartitionKind.UNIFORM_GRID
    selection: SelectionMode = SelectionMode.WEIGHTED_MEAN
    resample_plan: ResamplePlan = field(default_factory=ResamplePlan)
    adaptive: Optional[AdaptiveM] = None
    seed: int = 0
    kmeans_max_iter: int = 50

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if self.n_summaries is None:
            self.n_summaries = self.n_particles
        if not 1 <= self.n_summaries <= self.n_particles:
            raise ValueError("need 1 <= n_summaries <= n_particles")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.selection is SelectionMode.FUNCTION_SPECIFIC:
            raise ValueError("filters need state-space summaries, not integrand values")
        if self.algorithm is Algorithm.GENERIC_CPF and self.n_particles % self.n_summaries:
            raise DivisibilityViolation(
                f"n_particles={self.n_particles} is not a multiple of "
                f"n_summaries={self.n_summaries}"
            )
        if self.adaptive is not None and self.algorithm is not Algorithm.CBPF:
            raise ValueError("adaptive summary counts are only defined for the CBPF")


@dataclass
class FilterTrace:
    """Per-step diagnostics plus the final evidence and budget totals."""

    algorithm: Algorithm
    estimates: np.ndarray  # (T, d) posterior means before resampling
    ess: np.ndarray  # (T,)
    resampled: np.ndarray  # (T,) bool
    log_evidence_path: np.ndarray  # (T,) running log evidence
    m_used: np.ndarray  # (T,) likelihood evaluations that step
    degenerate_steps: np.ndarray  # (T,) bool, all-zero-weight events
    log_evidence: float
    total_evaluations: int
    wall_time_s: float

    @property
    def eval_counts(self) -> np.ndarray:
        return self.m_used


def posterior_mean(obj) -> np.ndarray:
    """Weighted mean state of a cloud or a (spatial) summary cloud."""
    if isinstance(obj, WeightedCloud):
        return obj.normalized @ obj.samples
    if isinstance(obj, SummaryCloud):
        if obj.mode is SelectionMode.FUNCTION_SPECIFIC:
            from .cmc import ProvenanceMismatch

            raise ProvenanceMismatch("integrand-space summaries have no state mean")
        return obj.weights @ obj.particles
    raise TypeError(f"expected WeightedCloud or SummaryCloud, got {type(obj)!r}")


def _check_states(x, n, model):
    x = np.asarray(x, dtype=float)
    if x.shape != (n, model.state_dim):
        raise ModelDimensionMismatch(
            f"model produced states of shape {x.shape}, expected ({n}, {model.state_dim})"
        )
    return x


def _loglik(model, x, y, t):
    ll = np.asarray(model.log_likelihood(x, y, t), dtype=float)
    if ll.shape != (x.shape[0],):
        raise ModelDimensionMismatch(
            f"model returned log-likelihoods of shape {ll.shape} for {x.shape[0]} states"
        )
    return ll


def _build_partition(config: FilterConfig, cloud: WeightedCloud, m: int, stream: RngStream):
    rule = config.partition_rule
    if rule is PartitionKind.UNIFORM_GRID:
        return build_uniform_grid(cloud, m)
    if rule is PartitionKind.RANDOM_GRID:
        return build_random_grid(cloud, m, stream.generator())
    return build_voronoi(
        cloud, min(m, cloud.n), stream.generator(), max_iter=config.kmeans_max_iter
    )


class _TraceBuilder:
    def __init__(self, algorithm, n_steps, dim):
        self.algorithm = algorithm
        self.estimates = np.zeros((n_steps, dim))
        self.ess = np.zeros(n_steps)
        self.resampled = np.zeros(n_steps, dtype=bool)
        self.log_evidence_path = np.zeros(n_steps)
        self.m_used = np.zeros(n_steps, dtype=np.int64)
        self.degenerate = np.zeros(n_steps, dtype=bool)
        self.t0 = time.perf_counter()

    def finish(self) -> FilterTrace:
        return FilterTrace(
            algorithm=self.algorithm,
            estimates=self.estimates,
            ess=self.ess,
            resampled=self.resampled,
            log_evidence_path=self.log_evidence_path,
            m_used=self.m_used,
            degenerate_steps=self.degenerate,
            log_evidence=float(self.log_evidence_path[-1]) if len(self.log_evidence_path) else 0.0,
            total_evaluations=int(self.m_used.sum()),
            wall_time_s=time.perf_counter() - self.t0,
        )


def run_bpf(model: StateSpaceModel, observations, config: FilterConfig, rng: Optional[RngStream] = None) -> FilterTrace:
    """Standard particle filter: propagate all particles, accumulate their
    weights with the likelihood, resample among the n particles when the
    ESS drops to eta * n, flat-resetting the weights to the running
    evidence estimate."""
    if config.algorithm is not Algorithm.BPF:
        raise ValueError("config.algorithm must be BPF")
    observations = np.asarray(observations)
    stream = rng if rng is not None else RngStream(config.seed)
    n = config.n_particles
    n_steps = observations.shape[0]
    ess_fn = _ESS_FN[config.ess]

    x = _check_states(model.sample_initial(n, stream.child(0, _INIT).generator()), n, model)
    tb = _TraceBuilder(Algorithm.BPF, n_steps, model.state_dim)
    log_w = np.zeros(n)
    broken = False

    for t in range(1, n_steps + 1):
        k = t - 1
        x = _check_states(
            model.sample_transition(x, t, stream.child(t, _PROPAGATE).generator()), n, model
        )
        log_w = log_w + _loglik(model, x, observations[k], t)
        tb.m_used[k] = n

        total = logsumexp(log_w)
        if total == -np.inf:
            broken = True
            tb.degenerate[k] = True
            wbar = np.full(n, 1.0 / n)
            log_w = np.zeros(n)
            log_z_t = -np.inf
        else:
            wbar = np.exp(log_w - total)
            wbar /= wbar.sum()
            log_z_t = -np.inf if broken else total - math.log(n)

        tb.log_evidence_path[k] = log_z_t
        tb.estimates[k] = wbar @ x
        ess_val = ess_fn(wbar)
        tb.ess[k] = ess_val

        if ess_val <= config.eta * n:
            tb.resampled[k] = True
            idx = categorical_indices(stream.child(t, _RESAMPLE).generator(), wbar, n)
            x = x[idx]
            log_w = np.zeros(n) if broken else np.full(n, total - math.log(n))
    return tb.finish()


def _compress_step(config, stream, t, x, m_t, log_rho=None):
    """Shared CBPF/GCPF step: partition the propagated cloud, compress it."""
    cloud = WeightedCloud(x, log_rho)
    part = _build_partition(config, cloud, m_t, stream.child(t, _PARTITION))
    idx = assign(part, cloud)
    plan = config.resample_plan
    return compress(
        cloud,
        idx,
        mode=config.selection,
        rng=stream.child(t, _SELECT),
        with_covariances=plan.mode is ResampleMode.REGULARIZED,
        eps=plan.eps,
    )


def run_cbpf(model: StateSpaceModel, observations, config: FilterConfig, rng: Optional[RngStream] = None) -> FilterTrace:
    """Compressed bootstrap filter: compress the (uniform) propagated cloud
    to summary particles, evaluate the likelihood only there, and resample
    the full particle set among the summaries at every step."""
    if config.algorithm is not Algorithm.CBPF:
        raise ValueError("config.algorithm must be CBPF")
    observations = np.asarray(observations)
    stream = rng if rng is not None else RngStream(config.seed)
    n = config.n_particles
    n_steps = observations.shape[0]
    ess_fn = _ESS_FN[config.ess]

    x = _check_states(model.sample_initial(n, stream.child(0, _INIT).generator()), n, model)
    tb = _TraceBuilder(Algorithm.CBPF, n_steps, model.state_dim)
    log_z = 0.0
    broken = False
    prev_summary_ess = None

    for t in range(1, n_steps + 1):
        k = t - 1
        x = _check_states(
            model.sample_transition(x, t, stream.child(t, _PROPAGATE).generator()), n, model
        )
        m_t = config.n_summaries
        if config.adaptive is not None and prev_summary_ess is not None:
            m_t = adaptive_summary_count(
                prev_summary_ess, config.adaptive.gamma, config.adaptive.m_min, n
            )
        sc = _compress_step(config, stream, t, x, m_t)
        ll = _loglik(model, sc.particles, observations[k], t)
        tb.m_used[k] = sc.n_summaries

        log_w_m = np.log(sc.weights) + ll
        total = logsumexp(log_w_m)
        if total == -np.inf:
            broken = True
            tb.degenerate[k] = True
            wbar_m = np.full(sc.n_summaries, 1.0 / sc.n_summaries)
        else:
            wbar_m = np.exp(log_w_m - total)
            wbar_m /= wbar_m.sum()
            log_z += total

        tb.log_evidence_path[k] = -np.inf if broken else log_z
        tb.estimates[k] = wbar_m @ sc.particles
        ess_val = ess_fn(wbar_m)
        tb.ess[k] = ess_val
        prev_summary_ess = ess_val

        tb.resampled[k] = True
        x = resample(sc, n, stream.child(t, _RESAMPLE), config.resample_plan, weights=wbar_m)
    return tb.finish()


def run_generic_cpf(model: StateSpaceModel, observations, config: FilterConfig, rng: Optional[RngStream] = None) -> FilterTrace:
    """Generic compressed filter: compress the weighted propagated cloud,
    reweight the summaries with the likelihood, and either resample the
    particle set among them (ESS at or below eta * M') or expand each
    summary into an equal share of particle slots carrying its weight."""
    if config.algorithm is not Algorithm.GENERIC_CPF:
        raise ValueError("config.algorithm must be GENERIC_CPF")
    observations = np.asarray(observations)
    stream = rng if rng is not None else RngStream(config.seed)
    n = config.n_particles
    n_steps = observations.shape[0]
    ess_fn = _ESS_FN[config.ess]

    x = _check_states(model.sample_initial(n, stream.child(0, _INIT).generator()), n, model)
    tb = _TraceBuilder(Algorithm.GENERIC_CPF, n_steps, model.state_dim)
    log_rho = np.full(n, -math.log(n))
    log_z = 0.0
    broken = False

    for t in range(1, n_steps + 1):
        k = t - 1
        x = _check_states(
            model.sample_transition(x, t, stream.child(t, _PROPAGATE).generator()), n, model
        )
        sc = _compress_step(config, stream, t, x, config.n_summaries, log_rho)
        ll = _loglik(model, sc.particles, observations[k], t)
        m_eff = sc.n_summaries
        tb.m_used[k] = m_eff

        log_w_m = np.log(sc.weights) + ll
        total = logsumexp(log_w_m)
        if total == -np.inf:
            broken = True
            tb.degenerate[k] = True
            wbar_m = np.full(m_eff, 1.0 / m_eff)
            tb.log_evidence_path[k] = -np.inf
            tb.estimates[k] = wbar_m @ sc.particles
            tb.ess[k] = ess_fn(wbar_m)
            tb.resampled[k] = True
            x = resample(sc, n, stream.child(t, _RESAMPLE), config.resample_plan, weights=wbar_m)
            log_rho = np.zeros(n)
            continue

        wbar_m = np.exp(log_w_m - total)
        wbar_m /= wbar_m.sum()
        log_z += total
        tb.log_evidence_path[k] = -np.inf if broken else log_z
        tb.estimates[k] = wbar_m @ sc.particles
        ess_val = ess_fn(wbar_m)
        tb.ess[k] = ess_val

        if ess_val <= config.eta * m_eff:
            tb.resampled[k] = True
            x = resample(sc, n, stream.child(t, _RESAMPLE), config.resample_plan, weights=wbar_m)
            log_rho = np.full(n, total)  # unnormalized sum of the summary weights
        else:
            # expand every summary into (as near as possible) n / M' slots;
            # per-copy weights keep the relative masses exact and reduce to
            # plain repetition of w_m whenever M' divides n
            copies = np.full(m_eff, n // m_eff, dtype=np.int64)
            copies[: n % m_eff] += 1
            x = np.repeat(sc.particles, copies, axis=0)
            log_rho = np.repeat(log_w_m - np.log(copies) + math.log(n / m_eff), copies)
    return tb.finish()


def run_filter(model: StateSpaceModel, observations, config: FilterConfig, rng: Optional[RngStream] = None) -> FilterTrace:
    if config.algorithm is Algorithm.BPF:
        return run_bpf(model, observations, config, rng)
    if config.algorithm is Algorithm.CBPF:
        return run_cbpf(model, observations, config, rng)
    return run_generic_cpf(model, observations, config, rng)
