import math

import numpy as np
import pytest

from cmcpf import (
    AllWeightsZero,
    EvidenceEstimate,
    RngStream,
    WeightedCloud,
    ess_max_weight,
    ess_sum_of_squares,
    evidence_estimate,
    is_estimate,
    logsumexp,
    normalize_weights,
)


class TestNormalizeWeights:
    def test_uniform(self):
        np.testing.assert_allclose(normalize_weights(np.zeros(4)), np.full(4, 0.25), atol=1e-15)

    def test_direct_arithmetic(self):
        w = normalize_weights(np.log([2.0, 6.0]))
        np.testing.assert_allclose(w, [0.25, 0.75], atol=1e-15)

    def test_indicator_violation(self):
        w = normalize_weights(np.array([-np.inf, 0.0]))
        np.testing.assert_allclose(w, [0.0, 1.0], atol=0)

    def test_all_zero_raises(self):
        with pytest.raises(AllWeightsZero):
            normalize_weights(np.array([-np.inf, -np.inf]))

    def test_sums_to_one(self):
        gen = np.random.default_rng(0)
        for _ in range(50):
            log_w = gen.normal(size=gen.integers(1, 40)) * 10
            assert abs(normalize_weights(log_w).sum() - 1.0) <= 1e-12

    def test_shift_invariance(self):
        gen = np.random.default_rng(1)
        for shift in (-700.0, -3.0, 450.0):
            log_w = gen.normal(size=25)
            np.testing.assert_allclose(
                normalize_weights(log_w), normalize_weights(log_w + shift), atol=1e-12
            )

    def test_rejects_nan_and_posinf(self):
        with pytest.raises(ValueError):
            normalize_weights(np.array([0.0, np.nan]))
        with pytest.raises(ValueError):
            normalize_weights(np.array([0.0, np.inf]))


def test_logsumexp_all_neginf():
    assert logsumexp(np.array([-np.inf, -np.inf])) == -np.inf


class TestWeightedCloud:
    def test_promotes_1d_samples(self):
        cloud = WeightedCloud(np.array([1.0, 2.0]))
        assert cloud.samples.shape == (2, 1)
        assert cloud.dim == 1 and cloud.n == 2

    def test_default_uniform_weights(self):
        cloud = WeightedCloud(np.arange(5.0))
        np.testing.assert_allclose(cloud.normalized, np.full(5, 0.2), atol=1e-15)

    def test_normalization_invariant(self):
        gen = np.random.default_rng(2)
        for _ in range(20):
            n = int(gen.integers(1, 60))
            cloud = WeightedCloud(gen.normal(size=(n, 2)), gen.normal(size=n) * 5)
            assert abs(cloud.normalized.sum() - 1.0) <= 1e-12

    def test_immutable(self):
        cloud = WeightedCloud(np.arange(4.0))
        with pytest.raises(ValueError):
            cloud.samples[0, 0] = 9.0
        with pytest.raises(ValueError):
            cloud.log_weights[0] = 1.0

    def test_massless_cloud(self):
        cloud = WeightedCloud(np.arange(3.0), np.full(3, -np.inf))
        assert not cloud.has_mass
        with pytest.raises(AllWeightsZero):
            cloud.normalized

    def test_validation(self):
        with pytest.raises(ValueError):
            WeightedCloud(np.empty((0, 1)))
        with pytest.raises(ValueError):
            WeightedCloud(np.arange(3.0), np.zeros(2))
        with pytest.raises(ValueError):
            WeightedCloud(np.array([np.nan, 1.0]))


class TestIsEstimate:
    def test_uniform_mean(self):
        cloud = WeightedCloud(np.array([1.0, 2.0, 3.0, 4.0]))
        assert is_estimate(cloud, lambda s: s[:, 0]) == pytest.approx(2.5, abs=1e-14)

    def test_weighted_mean(self):
        cloud = WeightedCloud(np.array([0.0, 4.0]), np.log([0.25, 0.75]))
        assert is_estimate(cloud, lambda s: s[:, 0]) == pytest.approx(3.0, abs=1e-14)

    def test_second_moment_monte_carlo(self):
        # oracle: E[X^2] = 1 for X ~ N(0,1); tolerance from the sample
        # variance of X^2 (3 standard errors)
        gen = np.random.default_rng(42)
        x = gen.standard_normal(100_000)
        cloud = WeightedCloud(x)
        est = is_estimate(cloud, lambda s: s[:, 0] ** 2)
        mc_se = np.std(x**2, ddof=1) / math.sqrt(x.size)
        assert abs(est - 1.0) <= 3 * mc_se

    def test_rescaling_invariance(self):
        gen = np.random.default_rng(3)
        x = gen.normal(size=30)
        log_w = gen.normal(size=30)
        a = is_estimate(WeightedCloud(x, log_w), lambda s: np.sin(s[:, 0]))
        b = is_estimate(WeightedCloud(x, log_w + math.log(7.5)), lambda s: np.sin(s[:, 0]))
        assert abs(a - b) <= 1e-12

    def test_propagates_all_zero(self):
        cloud = WeightedCloud(np.arange(3.0), np.full(3, -np.inf))
        with pytest.raises(AllWeightsZero):
            is_estimate(cloud, lambda s: s[:, 0])


class TestEvidence:
    def test_unit_weights(self):
        est = evidence_estimate(WeightedCloud(np.arange(4.0), np.zeros(4)))
        assert est.z_hat == pytest.approx(1.0, abs=1e-14)

    def test_mean_of_weights(self):
        est = evidence_estimate(WeightedCloud(np.arange(2.0), np.log([2.0, 6.0])))
        assert est.z_hat == pytest.approx(4.0, rel=1e-14)

    def test_all_zero_weights(self):
        est = evidence_estimate(WeightedCloud(np.arange(3.0), np.full(3, -np.inf)))
        assert est.z_hat == 0.0
        assert est.log_z == -np.inf

    def test_terms_property(self):
        est = EvidenceEstimate(log_z=0.0, log_terms=np.log([0.25, 0.75]))
        np.testing.assert_allclose(est.terms, [0.25, 0.75], atol=1e-15)


class TestEss:
    def test_uniform_is_n(self):
        assert ess_sum_of_squares(np.full(4, 0.25)) == pytest.approx(4.0, abs=1e-12)
        assert ess_max_weight(np.full(4, 0.25)) == pytest.approx(4.0, abs=1e-12)

    def test_degenerate_is_one(self):
        assert ess_sum_of_squares(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)
        assert ess_max_weight(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)

    def test_hand_evaluated(self):
        w = np.array([0.5, 0.3, 0.2])
        assert ess_sum_of_squares(w) == pytest.approx(1.0 / 0.38, abs=1e-4)
        assert ess_max_weight(w) == pytest.approx(2.0, abs=1e-12)

    def test_bounds(self):
        gen = np.random.default_rng(4)
        for _ in range(50):
            w = normalize_weights(gen.normal(size=int(gen.integers(1, 30))) * 3)
            n = w.size
            assert 1.0 - 1e-9 <= ess_sum_of_squares(w) <= n + 1e-9
            assert 1.0 - 1e-9 <= ess_max_weight(w) <= n + 1e-9


class TestRngStream:
    def test_reproducible(self):
        a = RngStream(7, (1, 2)).generator().normal(size=5)
        b = RngStream(7, (1, 2)).generator().normal(size=5)
        np.testing.assert_array_equal(a, b)

    def test_child_streams_differ(self):
        root = RngStream(7)
        a = root.child(0).generator().normal(size=5)
        b = root.child(1).generator().normal(size=5)
        assert not np.allclose(a, b)

    def test_generator_fresh_each_call(self):
        s = RngStream(3, (4,))
        np.testing.assert_array_equal(
            s.generator().normal(size=3), s.generator().normal(size=3)
        )

    def test_seed_validation(self):
        with pytest.raises(ValueError):
            RngStream(-1)
        with pytest.raises(ValueError):
            RngStream(2**64)
        with pytest.raises(ValueError):
            RngStream(1).child(-2)
