import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from dprfs.errors import InputError, ParameterError
from dprfs.rfs import (
    GaussianParams,
    PointPattern,
    PoissonRfsParams,
    gaussian_log_density,
    log_cardinality_pmf,
    log_poisson_rfs_density,
    sample_poisson_rfs,
)

STD_NORMAL = GaussianParams([0.0], [[1.0]])


class TestPointPattern:
    def test_empty_keeps_dimension(self):
        x = PointPattern.empty(3)
        assert len(x) == 0
        assert x.dim == 3

    def test_flat_list_is_one_dimensional(self):
        x = PointPattern([0.5, 1.0, -2.0])
        assert x.points.shape == (3, 1)

    def test_empty_without_dimension_rejected(self):
        with pytest.raises(InputError):
            PointPattern([])

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(InputError):
            PointPattern([[1.0, 2.0]], dim=3)

    def test_points_read_only(self):
        x = PointPattern([[1.0, 2.0]])
        with pytest.raises(ValueError):
            x.points[0, 0] = 5.0

    def test_set_equality_ignores_order(self):
        assert PointPattern([[1.0, 0.0], [0.0, 1.0]]) == PointPattern([[0.0, 1.0], [1.0, 0.0]])
        assert PointPattern([[1.0, 0.0]]) != PointPattern([[0.0, 1.0]])


class TestGaussianLogDensity:
    def test_standard_normal_at_zero(self):
        assert gaussian_log_density(0.0, STD_NORMAL) == pytest.approx(-0.9189385332046727, abs=1e-12)

    def test_standard_normal_at_one(self):
        assert gaussian_log_density(1.0, STD_NORMAL) == pytest.approx(-1.4189385332046727, abs=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 4])
    def test_value_at_mean(self, d):
        rng = np.random.default_rng(d)
        a = rng.normal(size=(d, d))
        cov = a @ a.T + d * np.eye(d)
        mean = rng.normal(size=d)
        expected = -0.5 * math.log((2 * math.pi) ** d * np.linalg.det(cov))
        assert gaussian_log_density(mean, GaussianParams(mean, cov)) == pytest.approx(expected, abs=1e-12)

    def test_matches_scipy_in_batch(self):
        rng = np.random.default_rng(0)
        cov = np.array([[2.0, 0.3], [0.3, 0.5]])
        params = GaussianParams([1.0, -1.0], cov)
        x = rng.normal(size=(50, 2))
        ref = stats.multivariate_normal(params.mean, cov).logpdf(x)
        np.testing.assert_allclose(gaussian_log_density(x, params), ref, rtol=0, atol=1e-12)

    def test_integrates_to_one_1d(self):
        params = GaussianParams([0.7], [[2.5]])
        val, _ = integrate.quad(lambda x: math.exp(gaussian_log_density(x, params)), -np.inf, np.inf)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_integrates_to_one_2d(self):
        params = GaussianParams([0.5, -0.5], [[1.0, 0.4], [0.4, 0.8]])
        val, _ = integrate.dblquad(
            lambda y, x: math.exp(gaussian_log_density([x, y], params)), -12, 12, -12, 12,
            epsabs=1e-11)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_non_spd_covariance_rejected(self):
        with pytest.raises(ParameterError):
            GaussianParams([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            gaussian_log_density([0.0, 0.0], STD_NORMAL)


class TestCardinality:
    def test_empty_anchor(self):
        assert log_cardinality_pmf(0, 2.0) == -2.0

    def test_single_point_rate_one(self):
        assert log_cardinality_pmf(1, 1.0) == -1.0

    def test_sums_to_one(self):
        total = math.fsum(math.exp(log_cardinality_pmf(n, 5.0)) for n in range(201))
        assert abs(total - 1.0) < 1e-12

    def test_rate_must_be_positive(self):
        with pytest.raises(ParameterError):
            log_cardinality_pmf(0, 0.0)


class TestPoissonRfsDensity:
    def test_empty_set(self):
        params = PoissonRfsParams(3.0, STD_NORMAL)
        assert log_poisson_rfs_density(PointPattern.empty(1), params) == -3.0

    def test_single_point(self):
        params = PoissonRfsParams(1.0, STD_NORMAL)
        value = log_poisson_rfs_density(PointPattern([[0.0]]), params)
        assert value == pytest.approx(-1.0 - 0.9189385332046727, abs=1e-12)

    def test_two_point_order(self):
        params = PoissonRfsParams(2.0, GaussianParams([0.0, 1.0], np.eye(2)))
        a = PointPattern([[0.3, 0.1], [2.0, -1.0]])
        b = PointPattern([[2.0, -1.0], [0.3, 0.1]])
        assert log_poisson_rfs_density(a, params) == log_poisson_rfs_density(b, params)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=0, max_size=12),
           st.randoms(use_true_random=False))
    def test_permutation_invariance_exact(self, pts, rnd):
        params = PoissonRfsParams(4.0, GaussianParams([1.0, -2.0], [[3.0, 0.5], [0.5, 1.0]]))
        shuffled = list(pts)
        rnd.shuffle(shuffled)
        a = PointPattern(pts, dim=2)
        b = PointPattern(shuffled, dim=2)
        assert log_poisson_rfs_density(a, params) == log_poisson_rfs_density(b, params)

    def test_dimension_mismatch(self):
        params = PoissonRfsParams(1.0, STD_NORMAL)
        with pytest.raises(InputError):
            log_poisson_rfs_density(PointPattern([[0.0, 0.0]]), params)

    def test_invalid_rate(self):
        for bad in (0.0, -1.0, math.inf, math.nan):
            with pytest.raises(ParameterError):
                PoissonRfsParams(bad, STD_NORMAL)

    def test_set_integral_normalizes(self):
        # sum_n 1/n! int_{W^n} p({x_1..x_n}) dx over a bounded 1-D window, n <= 6
        rate = 1.0
        feature = GaussianParams([0.5], [[0.8]])
        params = PoissonRfsParams(rate, feature)
        window = (-8.0, 9.0)
        total = 0.0
        for n in range(7):
            if n == 0:
                total += math.exp(log_poisson_rfs_density(PointPattern.empty(1), params))
            elif n == 1:
                val, _ = integrate.quad(
                    lambda x: math.exp(log_poisson_rfs_density(PointPattern([[x]]), params)), *window)
                total += val
            else:
                # the integrand factorizes over points; integrate one factor and raise it
                f1, _ = integrate.quad(lambda x: math.exp(gaussian_log_density(x, feature)), *window)
                total += math.exp(-rate) * rate ** n * f1 ** n / math.factorial(n)
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_two_point_set_integral_by_quadrature(self):
        params = PoissonRfsParams(1.3, GaussianParams([0.0], [[1.0]]))
        val, _ = integrate.dblquad(
            lambda y, x: math.exp(log_poisson_rfs_density(PointPattern([[x], [y]]), params)),
            -10, 10, -10, 10, epsabs=1e-11)
        expected = math.exp(-1.3) * 1.3 ** 2
        assert val == pytest.approx(expected, rel=1e-7)


class TestSampling:
    def test_tiny_rate_mostly_empty(self):
        rng = np.random.default_rng(1)
        params = PoissonRfsParams(1e-4, STD_NORMAL)
        empties = sum(len(sample_poisson_rfs(params, rng)) == 0 for _ in range(20000))
        # P(nonempty) = 1 - exp(-1e-4); 20000 draws give about 2 nonempty
        assert empties >= 20000 - 12

    def test_mean_cardinality_at_rate_100(self):
        rng = np.random.default_rng(2)
        params = PoissonRfsParams(100.0, STD_NORMAL)
        sizes = np.array([len(sample_poisson_rfs(params, rng)) for _ in range(100_000)])
        assert abs(sizes.mean() - 100.0) < 1.0
        assert abs(sizes.mean() - 100.0) < 3 * math.sqrt(100.0 / len(sizes))

    def test_fixed_seed_reproducible(self):
        params = PoissonRfsParams(5.0, GaussianParams([1.0, 2.0], [[1.0, 0.2], [0.2, 2.0]]))
        a = [sample_poisson_rfs(params, np.random.default_rng(7)) for _ in range(3)]
        b = [sample_poisson_rfs(params, np.random.default_rng(7)) for _ in range(3)]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.points, y.points)

    def test_cardinality_histogram_matches_pmf(self):
        rng = np.random.default_rng(3)
        rate = 3.0
        params = PoissonRfsParams(rate, STD_NORMAL)
        sizes = np.array([len(sample_poisson_rfs(params, rng)) for _ in range(100_000)])
        top = 10
        observed = np.array([np.sum(sizes == n) for n in range(top)] + [np.sum(sizes >= top)])
        probs = np.array([math.exp(log_cardinality_pmf(n, rate)) for n in range(top)])
        probs = np.append(probs, 1.0 - probs.sum())
        chi2 = stats.chisquare(observed, probs * len(sizes))
        assert chi2.pvalue > 1e-3

    def test_points_follow_feature_density(self):
        rng = np.random.default_rng(4)
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        params = PoissonRfsParams(50.0, GaussianParams([3.0, -1.0], cov))
        pts = np.concatenate([sample_poisson_rfs(params, rng).points for _ in range(400)])
        np.testing.assert_allclose(pts.mean(axis=0), [3.0, -1.0], atol=0.06)
        np.testing.assert_allclose(np.cov(pts, rowvar=False), cov, atol=0.08)
