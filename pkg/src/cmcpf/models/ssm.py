"""Benchmark state-space models, the linear-Gaussian model with its exact
Kalman oracle, synthetic-data generation, and model wrappers."""

from __future__ import annotations

import math
from typing import NamedTuple, Optional

import numpy as np

from ..core import _as_generator
from ..filters import StateSpaceModel

__all__ = [
    "AbsLogModel",
    "GrowthModel",
    "LinearGaussianModel",
    "KalmanResult",
    "kalman_filter",
    "SyntheticExpensiveModel",
    "CountingModel",
    "generate_synthetic",
]

_LOG_2PI = math.log(2.0 * math.pi)


def _gaussian_loglik(residuals: np.ndarray, std: float) -> np.ndarray:
    return -0.5 * (residuals / std) ** 2 - math.log(std) - 0.5 * _LOG_2PI


class AbsLogModel(StateSpaceModel):
    """x_t = |x_{t-1}| + v_t, y_t = log(x_t^2) + u_t with unit noises.

    x = 0 is handled by clamping x^2 at 1e-24 before the log (measure-zero
    event; keeps the likelihood NaN-free).
    """

    state_dim = 1
    obs_dim = 1

    def __init__(self, trans_std=1.0, obs_std=1.0, init_std=1.0):
        self.trans_std = trans_std
        self.obs_std = obs_std
        self.init_std = init_std

    def sample_initial(self, n, rng):
        return _as_generator(rng).normal(0.0, self.init_std, size=(n, 1))

    def sample_transition(self, states, t, rng):
        noise = _as_generator(rng).standard_normal(states.shape)
        return np.abs(states) + self.trans_std * noise

    def _obs_mean(self, states):
        return np.log(np.maximum(states[:, 0] ** 2, 1e-24))

    def log_likelihood(self, states, observation, t):
        return _gaussian_loglik(observation[0] - self._obs_mean(states), self.obs_std)

    def sample_observation(self, state, t, rng):
        mean = self._obs_mean(state[None, :])[0]
        return mean + self.obs_std * _as_generator(rng).standard_normal(1)


class GrowthModel(StateSpaceModel):
    """The standard highly nonlinear growth benchmark:
    x_t = x/2 + 25x/(1+x^2) + 8cos(1.2t) + v_t, y_t = x^2/20 + u_t,
    with v ~ N(0, 10) and u ~ N(0, 1).
    """

    state_dim = 1
    obs_dim = 1

    def __init__(self, trans_std=math.sqrt(10.0), obs_std=1.0, init_std=math.sqrt(10.0)):
        self.trans_std = trans_std
        self.obs_std = obs_std
        self.init_std = init_std

    def sample_initial(self, n, rng):
        return _as_generator(rng).normal(0.0, self.init_std, size=(n, 1))

    def _drift(self, states, t):
        x = states[:, 0]
        return 0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * math.cos(1.2 * t)

    def sample_transition(self, states, t, rng):
        noise = _as_generator(rng).standard_normal(states.shape[0])
        return (self._drift(states, t) + self.trans_std * noise)[:, None]

    def log_likelihood(self, states, observation, t):
        return _gaussian_loglik(observation[0] - states[:, 0] ** 2 / 20.0, self.obs_std)

    def sample_observation(self, state, t, rng):
        mean = state[0] ** 2 / 20.0
        return mean + self.obs_std * _as_generator(rng).standard_normal(1)


class LinearGaussianModel(StateSpaceModel):
    """Scalar linear-Gaussian model, exactly solvable by the Kalman filter."""

    state_dim = 1
    obs_dim = 1

    def __init__(self, a=0.9, trans_std=1.0, c=1.0, obs_std=1.0, init_mean=0.0, init_std=1.0):
        self.a = a
        self.trans_std = trans_std
        self.c = c
        self.obs_std = obs_std
        self.init_mean = init_mean
        self.init_std = init_std

    def sample_initial(self, n, rng):
        return _as_generator(rng).normal(self.init_mean, self.init_std, size=(n, 1))

    def sample_transition(self, states, t, rng):
        noise = _as_generator(rng).standard_normal(states.shape)
        return self.a * states + self.trans_std * noise

    def log_likelihood(self, states, observation, t):
        return _gaussian_loglik(observation[0] - self.c * states[:, 0], self.obs_std)

    def sample_observation(self, state, t, rng):
        return self.c * state[0] + self.obs_std * _as_generator(rng).standard_normal(1)


class KalmanResult(NamedTuple):
    means: np.ndarray  # filtered means, (T,)
    variances: np.ndarray  # filtered variances, (T,)
    log_evidence: float


def kalman_filter(model: LinearGaussianModel, observations) -> KalmanResult:
    """Exact filtering and log-evidence for the scalar linear-Gaussian model.

    The log-evidence accumulates the innovation densities
    log N(y_t; c m_pred, c^2 v_pred + r).
    """
    observations = np.asarray(observations, dtype=float).reshape(-1)
    a, c = model.a, model.c
    q = model.trans_std**2
    r = model.obs_std**2
    mean, var = model.init_mean, model.init_std**2
    means = np.empty(observations.shape[0])
    variances = np.empty(observations.shape[0])
    log_z = 0.0
    for t, y in enumerate(observations):
        mean_pred = a * mean
        var_pred = a * a * var + q
        innov_var = c * c * var_pred + r
        innov = y - c * mean_pred
        log_z += -0.5 * (innov * innov / innov_var + math.log(2.0 * math.pi * innov_var))
        gain = var_pred * c / innov_var
        mean = mean_pred + gain * innov
        var = (1.0 - gain * c) * var_pred
        means[t] = mean
        variances[t] = var
    return KalmanResult(means, variances, log_z)


class SyntheticExpensiveModel(StateSpaceModel):
    """Wrapper that makes likelihood evaluations artificially costly.

    Likelihood values are identical to the inner model's; ``cost`` extra
    vectorized passes over the states are burned per evaluated state, so
    wall time scales with (batch size x cost). Stands in for simulator-class
    observation models where evaluation dominates the budget.
    """

    def __init__(self, inner: StateSpaceModel, cost: int = 100):
        self.inner = inner
        self.cost = int(cost)
        self.state_dim = inner.state_dim
        self.obs_dim = inner.obs_dim

    def sample_initial(self, n, rng):
        return self.inner.sample_initial(n, rng)

    def sample_transition(self, states, t, rng):
        return self.inner.sample_transition(states, t, rng)

    def log_likelihood(self, states, observation, t):
        scratch = np.sum(states, axis=1)
        for _ in range(self.cost):
            scratch = np.cos(scratch) + 1.0
        return self.inner.log_likelihood(states, observation, t)

    def sample_observation(self, state, t, rng):
        return self.inner.sample_observation(state, t, rng)

    def simulate_transition(self, state, t, rng):
        return self.inner.simulate_transition(state, t, rng)


class CountingModel(StateSpaceModel):
    """Wrapper that counts likelihood evaluations, one per state row."""

    def __init__(self, inner: StateSpaceModel):
        self.inner = inner
        self.state_dim = inner.state_dim
        self.obs_dim = inner.obs_dim
        self.likelihood_evals = 0

    def sample_initial(self, n, rng):
        return self.inner.sample_initial(n, rng)

    def sample_transition(self, states, t, rng):
        return self.inner.sample_transition(states, t, rng)

    def log_likelihood(self, states, observation, t):
        self.likelihood_evals += states.shape[0]
        return self.inner.log_likelihood(states, observation, t)

    def sample_observation(self, state, t, rng):
        return self.inner.sample_observation(state, t, rng)

    def simulate_transition(self, state, t, rng):
        return self.inner.simulate_transition(state, t, rng)


def generate_synthetic(
    model: StateSpaceModel, n_steps: int, rng, x0: Optional[np.ndarray] = None
):
    """Forward-simulate (states, observations) from the model.

    Returns states of shape (n_steps + 1, d) including the initial state,
    and observations of shape (n_steps, obs_dim). ``n_steps=0`` yields only
    the initial state and an empty observation array.
    """
    gen = _as_generator(rng)
    if x0 is None:
        x0 = model.sample_initial(1, gen)[0]
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != model.state_dim:
        raise ValueError(
            f"x0 has dimension {x0.shape[0]}, model expects {model.state_dim}"
        )
    states = np.empty((n_steps + 1, model.state_dim))
    observations = np.empty((n_steps, model.obs_dim))
    states[0] = x0
    for t in range(1, n_steps + 1):
        states[t] = model.simulate_transition(states[t - 1], t, gen)
        observations[t - 1] = model.sample_observation(states[t], t, gen)
    return states, observations
