"""Concrete targets, state-space models and oracles for the benchmarks."""

from .kepler import (
    ConstraintViolation,
    EccentricityOutOfRange,
    KeplerModel,
    NonpositivePeriod,
    kepler_log_likelihood,
    kepler_mean_anomaly,
    radial_velocity,
    scenario_initial_state,
    solve_kepler,
    solve_kepler_batch,
    true_anomaly,
)
from .ssm import (
    AbsLogModel,
    CountingModel,
    GrowthModel,
    KalmanResult,
    LinearGaussianModel,
    SyntheticExpensiveModel,
    generate_synthetic,
    kalman_filter,
)
from .targets import (
    GammaTarget,
    MixtureTarget,
    gamma_moments,
    gaussian_raw_moment,
    mixture_moments,
)

__all__ = [
    "AbsLogModel",
    "ConstraintViolation",
    "CountingModel",
    "EccentricityOutOfRange",
    "GammaTarget",
    "GrowthModel",
    "KalmanResult",
    "KeplerModel",
    "LinearGaussianModel",
    "MixtureTarget",
    "NonpositivePeriod",
    "SyntheticExpensiveModel",
    "gamma_moments",
    "gaussian_raw_moment",
    "generate_synthetic",
    "kalman_filter",
    "kepler_log_likelihood",
    "kepler_mean_anomaly",
    "mixture_moments",
    "radial_velocity",
    "scenario_initial_state",
    "solve_kepler",
    "solve_kepler_batch",
    "true_anomaly",
]
