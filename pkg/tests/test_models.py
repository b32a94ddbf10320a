import math
import time

import numpy as np
import pytest
from scipy import integrate

from cmcpf import RngStream
from cmcpf.models import (
    AbsLogModel,
    CountingModel,
    GammaTarget,
    GrowthModel,
    LinearGaussianModel,
    MixtureTarget,
    SyntheticExpensiveModel,
    gamma_moments,
    generate_synthetic,
    kalman_filter,
    mixture_moments,
)


class TestTargets:
    def test_gamma_moments_closed_form(self):
        # oracle: quadrature of x^k against the normalized density
        target = GammaTarget()
        for k in range(1, 6):
            oracle, _ = integrate.quad(lambda x: x**k * target.pdf(np.array([x]))[0], 0, 200)
            assert gamma_moments(k) == pytest.approx(oracle, rel=1e-8)

    def test_gamma_moment_values(self):
        assert [gamma_moments(k) for k in range(1, 6)] == [2.0, 5.0, 15.0, 52.5, 210.0]

    def test_mixture_moments_closed_form(self):
        target = MixtureTarget()
        for k in range(1, 6):
            oracle, _ = integrate.quad(
                lambda x: x**k * target.pdf(np.array([x]))[0], -60, 60, limit=200
            )
            assert mixture_moments(k) == pytest.approx(oracle, rel=1e-8)

    def test_mixture_low_moments(self):
        assert mixture_moments(1) == pytest.approx(1.0, abs=1e-12)
        assert mixture_moments(2) == pytest.approx(10.625, abs=1e-12)

    def test_moment_order_validated(self):
        for k in (0, 6):
            with pytest.raises(ValueError):
                gamma_moments(k)
            with pytest.raises(ValueError):
                mixture_moments(k)

    def test_sampling_matches_mean(self):
        gen = RngStream(0).generator()
        x = GammaTarget().sample(50_000, gen)[:, 0]
        assert abs(x.mean() - 2.0) <= 3 * x.std(ddof=1) / math.sqrt(x.size)
        y = MixtureTarget().sample(50_000, gen)[:, 0]
        assert abs(y.mean() - 1.0) <= 3 * y.std(ddof=1) / math.sqrt(y.size)


class TestAbsLog:
    def test_likelihood_finite_at_zero_state(self):
        model = AbsLogModel()
        ll = model.log_likelihood(np.zeros((3, 1)), np.array([0.5]), 1)
        assert np.isfinite(ll).all()

    def test_likelihood_matches_gaussian_density(self):
        model = AbsLogModel()
        x = np.array([[2.0]])
        y = np.array([1.3])
        expected = -0.5 * (1.3 - math.log(4.0)) ** 2 - 0.5 * math.log(2 * math.pi)
        assert model.log_likelihood(x, y, 1)[0] == pytest.approx(expected, abs=1e-12)

    def test_transition_takes_absolute_value(self):
        model = AbsLogModel(trans_std=0.0)
        out = model.sample_transition(np.array([[-3.0], [2.0]]), 1, RngStream(0))
        np.testing.assert_allclose(out, [[3.0], [2.0]], atol=0)


class TestGrowth:
    def test_trajectories_stay_finite(self):
        model = GrowthModel()
        states, obs = generate_synthetic(model, 100, RngStream(1))
        assert np.isfinite(states).all() and np.isfinite(obs).all()
        assert np.abs(states).max() < 100.0  # the benchmark oscillates in ~[-25, 25]

    def test_observation_is_square_over_twenty(self):
        model = GrowthModel(obs_std=1e-12)
        y = model.sample_observation(np.array([6.0]), 3, RngStream(2))
        assert y[0] == pytest.approx(36.0 / 20.0, abs=1e-9)

    def test_drift_components(self):
        model = GrowthModel(trans_std=0.0)
        out = model.sample_transition(np.array([[2.0]]), 2, RngStream(3))
        expected = 1.0 + 50.0 / 5.0 + 8.0 * math.cos(2.4)
        assert out[0, 0] == pytest.approx(expected, abs=1e-12)


class TestKalman:
    def test_single_step_marginal(self):
        # oracle: y_1 = c x_1 + noise with x_1 ~ N(a m0, a^2 p0 + q)
        model = LinearGaussianModel(a=0.8, trans_std=0.7, c=1.3, obs_std=0.9,
                                    init_mean=0.4, init_std=1.1)
        y = 0.25
        var = 1.3**2 * (0.8**2 * 1.1**2 + 0.7**2) + 0.9**2
        mean = 1.3 * 0.8 * 0.4
        oracle = -0.5 * ((y - mean) ** 2 / var + math.log(2 * math.pi * var))
        result = kalman_filter(model, [y])
        assert result.log_evidence == pytest.approx(oracle, abs=1e-12)

    def test_two_step_marginal_by_quadrature(self):
        model = LinearGaussianModel(a=0.9, trans_std=1.0, c=1.0, obs_std=1.0,
                                    init_mean=0.0, init_std=1.0)
        ys = [0.7, -0.4]

        def like(y, x):
            return math.exp(-0.5 * (y - x) ** 2) / math.sqrt(2 * math.pi)

        def joint(x1, x2):
            p1 = math.exp(-0.5 * x1**2 / (0.9**2 + 1.0)) / math.sqrt(2 * math.pi * (0.9**2 + 1.0))
            p2 = math.exp(-0.5 * (x2 - 0.9 * x1) ** 2) / math.sqrt(2 * math.pi)
            return p1 * p2 * like(ys[0], x1) * like(ys[1], x2)

        oracle, _ = integrate.dblquad(
            lambda x2, x1: joint(x1, x2), -12, 12, lambda _: -12, lambda _: 12
        )
        result = kalman_filter(model, ys)
        assert result.log_evidence == pytest.approx(math.log(oracle), abs=1e-7)

    def test_filtered_mean_tracks_truth(self):
        model = LinearGaussianModel()
        states, obs = generate_synthetic(model, 200, RngStream(4))
        result = kalman_filter(model, obs[:, 0])
        rmse = np.sqrt(np.mean((result.means - states[1:, 0]) ** 2))
        assert rmse < 1.0


class TestWrappers:
    def test_expensive_model_same_values(self):
        inner = GrowthModel()
        wrapped = SyntheticExpensiveModel(inner, cost=10)
        states = RngStream(5).generator().normal(size=(50, 1))
        y = np.array([1.0])
        np.testing.assert_array_equal(
            wrapped.log_likelihood(states, y, 1), inner.log_likelihood(states, y, 1)
        )

    def test_expensive_model_costs_time(self):
        inner = GrowthModel()
        cheap = SyntheticExpensiveModel(inner, cost=1)
        costly = SyntheticExpensiveModel(inner, cost=3000)
        states = RngStream(6).generator().normal(size=(2000, 1))
        y = np.array([1.0])
        t0 = time.perf_counter()
        cheap.log_likelihood(states, y, 1)
        t_cheap = time.perf_counter() - t0
        t0 = time.perf_counter()
        costly.log_likelihood(states, y, 1)
        t_costly = time.perf_counter() - t0
        assert t_costly > t_cheap

    def test_counting_model(self):
        model = CountingModel(AbsLogModel())
        states = np.ones((7, 1))
        model.log_likelihood(states, np.array([0.0]), 1)
        model.log_likelihood(states[:3], np.array([0.0]), 2)
        assert model.likelihood_evals == 10


class TestGenerateSynthetic:
    def test_zero_steps(self):
        states, obs = generate_synthetic(AbsLogModel(), 0, RngStream(7))
        assert states.shape == (1, 1)
        assert obs.shape == (0, 1)

    def test_deterministic(self):
        a = generate_synthetic(GrowthModel(), 20, RngStream(8))
        b = generate_synthetic(GrowthModel(), 20, RngStream(8))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_explicit_initial_state(self):
        states, _ = generate_synthetic(AbsLogModel(), 5, RngStream(9), x0=np.array([2.5]))
        assert states[0, 0] == 2.5

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            generate_synthetic(AbsLogModel(), 5, RngStream(10), x0=np.array([1.0, 2.0]))
