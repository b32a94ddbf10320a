import math

import numpy as np
import pytest

from cmcpf import (
    AllWeightsZero,
    ProvenanceMismatch,
    RngStream,
    SelectionMode,
    WeightedCloud,
    assign,
    build_uniform_grid,
    build_voronoi,
    cmc_estimate,
    compress,
    evidence_estimate,
    is_estimate,
    partial_weights,
    region_covariances,
    select_function_specific,
    select_stochastic,
    select_weighted_mean,
    summary_weights,
)


def _grid_setup(samples, log_w, m):
    cloud = WeightedCloud(np.asarray(samples, dtype=float), log_w)
    part = build_uniform_grid(cloud, m)
    idx = assign(part, cloud)
    return cloud, idx


def _random_fixture(gen, n_max=400):
    n = int(gen.integers(3, n_max))
    d = int(gen.integers(1, 4))
    samples = gen.normal(2.0, 1.0, size=(n, d))
    log_w = gen.normal(size=n) * 2.0
    if gen.random() < 0.3:  # sprinkle constraint violations
        log_w[gen.random(n) < 0.1] = -np.inf
    cloud = WeightedCloud(samples, log_w)
    m = int(gen.integers(1, n + 1))
    if gen.random() < 0.5:
        part = build_uniform_grid(cloud, m)
    else:
        part = build_voronoi(cloud, m, RngStream(int(gen.integers(1 << 32))))
    return cloud, assign(part, cloud)


class TestSummaryWeights:
    def test_direct_sums(self):
        cloud, idx = _grid_setup([1.0, 2.0, 3.0, 4.0], np.log([0.1, 0.2, 0.3, 0.4]), 2)
        sw = summary_weights(cloud, idx)
        np.testing.assert_allclose(sw.weights, [0.3, 0.7], atol=1e-12)

    def test_uniform_weights_give_region_fractions(self):
        gen = np.random.default_rng(0)
        cloud = WeightedCloud(gen.normal(size=60))
        idx = assign(build_uniform_grid(cloud, 6), cloud)
        sw = summary_weights(cloud, idx)
        counts = idx.counts[idx.counts > 0]
        np.testing.assert_allclose(sw.weights, counts / 60, atol=1e-12)

    def test_singleton_regions_reproduce_weights(self):
        gen = np.random.default_rng(1)
        x = np.sort(gen.normal(size=15))
        cloud = WeightedCloud(x, gen.normal(size=15))
        idx = assign(build_voronoi(cloud, 15, RngStream(1)), cloud)
        sw = summary_weights(cloud, idx)
        np.testing.assert_allclose(sw.weights, cloud.normalized, atol=1e-14)

    def test_evidence_terms_sum_losslessly(self):
        gen = np.random.default_rng(2)
        for _ in range(30):
            cloud, idx = _random_fixture(gen)
            sc = compress(cloud, idx)
            total = evidence_estimate(cloud)
            assert sc.evidence().log_z == pytest.approx(total.log_z, abs=1e-12)

    def test_all_weights_zero(self):
        cloud = WeightedCloud(np.arange(4.0), np.full(4, -np.inf))
        idx_cloud = WeightedCloud(np.arange(4.0))
        idx = assign(build_uniform_grid(idx_cloud, 2), idx_cloud)
        with pytest.raises(AllWeightsZero):
            summary_weights(cloud, idx)


class TestPartialWeights:
    def test_region_normalization(self):
        cloud, idx = _grid_setup([1.0, 2.0, 6.0, 7.0], np.log([2.0, 6.0, 1.0, 1.0]), 2)
        pw = partial_weights(cloud, idx)
        np.testing.assert_allclose(pw.region_values(0), [0.25, 0.75], atol=1e-12)
        np.testing.assert_allclose(pw.region_values(1), [0.5, 0.5], atol=1e-12)

    def test_unweighted_case(self):
        cloud = WeightedCloud(np.arange(5.0))
        idx = assign(build_uniform_grid(cloud, 1), cloud)
        pw = partial_weights(cloud, idx)
        np.testing.assert_allclose(pw.values, np.full(5, 0.2), atol=1e-14)

    def test_singleton(self):
        gen = np.random.default_rng(3)
        cloud = WeightedCloud(np.sort(gen.normal(size=8)), gen.normal(size=8))
        idx = assign(build_voronoi(cloud, 8, RngStream(0)), cloud)
        np.testing.assert_allclose(partial_weights(cloud, idx).values, np.ones(8), atol=0)

    def test_region_sums_are_one(self):
        gen = np.random.default_rng(4)
        for _ in range(20):
            cloud, idx = _random_fixture(gen)
            pw = partial_weights(cloud, idx)
            for region in pw.regions:
                assert abs(pw.region_values(int(region)).sum() - 1.0) <= 1e-12


class TestStochasticSelection:
    def test_singleton_region_returns_sample(self):
        gen = np.random.default_rng(5)
        x = np.sort(gen.normal(size=10))
        cloud = WeightedCloud(x, gen.normal(size=10))
        idx = assign(build_voronoi(cloud, 10, RngStream(0)), cloud)
        sc = compress(cloud, idx, SelectionMode.STOCHASTIC, rng=RngStream(1))
        np.testing.assert_array_equal(sc.particles, cloud.samples)

    def test_selection_frequency_binomial(self):
        # oracle: picking 4 over 0 is Bernoulli(0.75); 3-sigma binomial band
        cloud = WeightedCloud(np.array([0.0, 4.0]), np.log([0.25, 0.75]))
        idx = assign(build_uniform_grid(cloud, 1), cloud)
        pw = partial_weights(cloud, idx)
        reps = 40_000
        root = RngStream(11)
        hits = 0
        for k in range(reps):
            sc = select_stochastic(cloud, idx, pw, root.child(k))
            hits += sc.particles[0, 0] == 4.0
        freq = hits / reps
        assert abs(freq - 0.75) <= 3 * math.sqrt(0.75 * 0.25 / reps)

    def test_deterministic_given_stream(self):
        gen = np.random.default_rng(6)
        cloud = WeightedCloud(gen.normal(size=50), gen.normal(size=50))
        idx = assign(build_uniform_grid(cloud, 7), cloud)
        pw = partial_weights(cloud, idx)
        a = select_stochastic(cloud, idx, pw, RngStream(4))
        b = select_stochastic(cloud, idx, pw, RngStream(4))
        np.testing.assert_array_equal(a.particles, b.particles)


class TestDeterministicSelections:
    def test_weighted_mean_example(self):
        cloud, idx = _grid_setup([1.0, 3.0], np.log([0.25, 0.75]), 1)
        sc = select_weighted_mean(cloud, idx, partial_weights(cloud, idx))
        assert sc.particles[0, 0] == pytest.approx(2.5, abs=1e-14)

    def test_symmetric_region_mean_zero(self):
        cloud, idx = _grid_setup([-2.0, 2.0], None, 1)
        sc = select_weighted_mean(cloud, idx, partial_weights(cloud, idx))
        assert sc.particles[0, 0] == pytest.approx(0.0, abs=1e-14)

    def test_weighted_mean_in_convex_hull(self):
        gen = np.random.default_rng(7)
        for _ in range(10):
            cloud, idx = _random_fixture(gen)
            sc = compress(cloud, idx, SelectionMode.WEIGHTED_MEAN)
            order, = np.where(np.isin(idx.region_ids, sc.regions))
            for j, region in enumerate(sc.regions):
                members = cloud.samples[idx.region_ids == region]
                lo, hi = members.min(axis=0), members.max(axis=0)
                assert (sc.particles[j] >= lo - 1e-9).all()
                assert (sc.particles[j] <= hi + 1e-9).all()

    def test_function_specific_example(self):
        cloud, idx = _grid_setup([1.0, 3.0], np.log([0.5, 0.5]), 1)
        sc = select_function_specific(
            cloud, idx, partial_weights(cloud, idx), lambda s: s[:, 0] ** 2
        )
        assert sc.particles[0] == pytest.approx(5.0, abs=1e-14)

    def test_function_specific_identity_matches_weighted_mean(self):
        gen = np.random.default_rng(8)
        cloud, idx = _random_fixture(gen)
        pw = partial_weights(cloud, idx)
        a = select_weighted_mean(cloud, idx, pw)
        b = select_function_specific(cloud, idx, pw, lambda s: s[:, 0])
        np.testing.assert_allclose(b.particles, a.particles[:, 0], atol=1e-13)


H_FAMILY = [
    lambda s: s[:, 0],
    lambda s: s[:, 0] ** 2,
    lambda s: np.sin(s[:, 0]) + 2.0,
    lambda s: (s[:, 0] > 2.0).astype(float),
]


class TestEstimators:
    def test_single_summary(self):
        cloud, idx = _grid_setup([1.0, 3.0], np.log([0.5, 0.5]), 1)
        sc = compress(cloud, idx)
        assert cmc_estimate(sc, lambda s: 3.0 * s[:, 0]) == pytest.approx(6.0, abs=1e-13)

    def test_exact_reconstruction_of_is_estimate(self):
        gen = np.random.default_rng(9)
        for _ in range(40):
            cloud, idx = _random_fixture(gen)
            for h in H_FAMILY:
                direct = is_estimate(cloud, h)
                sc = compress(cloud, idx, SelectionMode.FUNCTION_SPECIFIC, h=h)
                reconstructed = cmc_estimate(sc)
                assert abs(reconstructed - direct) <= 1e-12 * max(1e-9, abs(direct))

    def test_stochastic_selection_unbiased(self):
        gen = np.random.default_rng(10)
        cloud = WeightedCloud(gen.normal(2.0, 1.0, size=120), gen.normal(size=120))
        idx = assign(build_uniform_grid(cloud, 8), cloud)
        h = lambda s: s[:, 0] ** 2
        direct = is_estimate(cloud, h)
        reps = 4000
        root = RngStream(21)
        values = np.array(
            [
                cmc_estimate(compress(cloud, idx, SelectionMode.STOCHASTIC, rng=root.child(k)), h)
                for k in range(reps)
            ]
        )
        se = values.std(ddof=1) / math.sqrt(reps)
        assert abs(values.mean() - direct) <= 4 * se

    def test_convex_combination_identity(self):
        gen = np.random.default_rng(11)
        for _ in range(20):
            cloud, idx = _random_fixture(gen)
            h = H_FAMILY[1]
            pw = partial_weights(cloud, idx)
            sw = summary_weights(cloud, idx)
            values = h(cloud.samples)
            total = 0.0
            for weight, region in zip(sw.weights, sw.regions):
                members = idx.region_ids == region
                total += weight * float(pw.values[members] @ values[members])
            assert abs(total - is_estimate(cloud, h)) <= 1e-12 * max(1.0, abs(total))

    def test_provenance_mismatch(self):
        cloud, idx = _grid_setup([1.0, 3.0], None, 1)
        sc = compress(cloud, idx, SelectionMode.FUNCTION_SPECIFIC, h=lambda s: s[:, 0])
        with pytest.raises(ProvenanceMismatch):
            cmc_estimate(sc, lambda s: s**2)

    def test_identity_requires_1d(self):
        gen = np.random.default_rng(12)
        cloud = WeightedCloud(gen.normal(size=(10, 2)))
        idx = assign(build_uniform_grid(cloud, 2), cloud)
        sc = compress(cloud, idx)
        with pytest.raises(ValueError):
            cmc_estimate(sc)


class TestProperPartitionIdentity:
    def test_compression_is_identity_at_m_equals_n(self):
        gen = np.random.default_rng(13)
        x = np.sort(gen.normal(size=30))
        log_w = gen.normal(size=30)
        cloud = WeightedCloud(x, log_w)
        idx = assign(build_voronoi(cloud, 30, RngStream(5)), cloud)
        for mode, rng in [
            (SelectionMode.STOCHASTIC, RngStream(6)),
            (SelectionMode.WEIGHTED_MEAN, None),
        ]:
            sc = compress(cloud, idx, mode, rng=rng)
            np.testing.assert_array_equal(sc.particles, cloud.samples)
            np.testing.assert_allclose(sc.weights, cloud.normalized, atol=1e-14)


class TestRegionCovariances:
    def test_singleton_is_eps(self):
        cloud, idx = _grid_setup([2.0], None, 1)
        cov = region_covariances(cloud, idx, partial_weights(cloud, idx), eps=1e-6)
        assert cov[0, 0, 0] == pytest.approx(1e-6, rel=1e-9)

    def test_plus_minus_one(self):
        cloud, idx = _grid_setup([-1.0, 1.0], None, 1)
        cov = region_covariances(cloud, idx, partial_weights(cloud, idx), eps=1e-12)
        assert cov[0, 0, 0] == pytest.approx(1.0, rel=1e-9)

    def test_matches_two_pass_oracle(self):
        gen = np.random.default_rng(14)
        cloud = WeightedCloud(gen.normal(size=(40, 2)), gen.normal(size=40))
        idx = assign(build_uniform_grid(cloud, 3), cloud)
        pw = partial_weights(cloud, idx)
        eps = 1e-8
        cov = region_covariances(cloud, idx, pw, eps)
        for j, region in enumerate(pw.regions):
            members = idx.region_ids == region
            w = pw.values[members]
            x = cloud.samples[members]
            mean = w @ x
            oracle = np.zeros((2, 2))
            for wi, xi in zip(w, x):
                diff = (xi - mean)[:, None]
                oracle += wi * diff @ diff.T
            oracle += eps * np.eye(2)
            np.testing.assert_allclose(cov[j], oracle, atol=1e-10)

    def test_positive_definite(self):
        gen = np.random.default_rng(15)
        cloud, idx = _random_fixture(gen)
        cov = region_covariances(cloud, idx, partial_weights(cloud, idx), eps=1e-6)
        for matrix in cov:
            np.linalg.cholesky(matrix)

    def test_eps_required(self):
        cloud, idx = _grid_setup([1.0, 2.0], None, 1)
        with pytest.raises(ValueError):
            region_covariances(cloud, idx, partial_weights(cloud, idx), eps=0.0)


def test_empty_and_massless_regions_dropped():
    # region 2 has no mass at all: it must vanish from the summary
    x = np.array([0.0, 1.0, 8.0, 9.0])
    log_w = np.array([0.0, 0.0, -np.inf, -np.inf])
    cloud = WeightedCloud(x, log_w)
    idx = assign(build_uniform_grid(cloud, 2), cloud)
    sc = compress(cloud, idx)
    assert sc.n_summaries == 1
    assert sc.weights.sum() == pytest.approx(1.0, abs=1e-14)
