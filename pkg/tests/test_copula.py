import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import multivariate_normal

from qawa.copula import (
    EmpiricalCopula,
    GaussianCopulaSpec,
    copula_distance,
    dkw_bound,
    empirical_cdf,
    empirical_copula,
    gaussian_copula_cdf,
    gaussian_copula_cdf_exact,
    gaussian_copula_grid,
    grid_l1,
    joint_empirical_cdf,
    kl_divergence,
    pairwise_correlations,
    pseudo_observations,
    sklar_recompose,
    smoothed_density,
    sup_deviation_2d,
)
from qawa.errors import InputError
from qawa.simcore import RngStream, SampleSet


def check_axioms(c: np.ndarray):
    assert np.allclose(c[0, :], 0, atol=1e-9) and np.allclose(c[:, 0], 0, atol=1e-9)
    assert c[-1, -1] == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(c, axis=0) >= -1e-9) and np.all(np.diff(c, axis=1) >= -1e-9)


class TestMarginals:
    def test_all_zeros(self):
        assert empirical_cdf(np.zeros(5))(0) == 1.0

    def test_half_ones(self):
        f = empirical_cdf([0, 1, 0, 1])
        assert f(0) == 0.5 and f(1) == 1.0 and f(-0.1) == 0.0

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=30))
    def test_nondecreasing(self, xs):
        f = empirical_cdf(xs)
        assert np.all(np.diff(f.cumulative) >= 0) and f.cumulative[-1] == pytest.approx(1.0)
        t = np.linspace(-6, 6, 50)
        assert np.all(np.diff(f(t)) >= 0)

    def test_empty(self):
        with pytest.raises(InputError):
            empirical_cdf(np.zeros((0, 1)))


class TestEmpiricalCopula:
    def test_independence_within_dkw_band(self):
        k = 10_000
        data = RngStream(1).generator.uniform(size=(k, 2))
        c = empirical_copula(data, g=50, rng=RngStream(2))
        grid = c.grid
        dev = np.max(np.abs(c.pair() - np.outer(grid, grid)))
        # band at level 1e-3 for a bivariate CDF, plus the 1/K rank shift
        band = math.sqrt(math.log(4 / 1e-3) / (2 * k)) + 2 / k
        assert dev <= band

    def test_comonotone_is_upper_frechet(self):
        x = RngStream(3).generator.normal(size=5000)
        c = empirical_copula(np.column_stack([x, x]), g=40, rng=RngStream(4))
        g = c.grid
        assert np.max(np.abs(c.pair() - np.minimum.outer(g, g))) <= 1 / 40

    def test_axioms_on_binary_samples(self):
        idx = RngStream(5).generator.integers(0, 16, 3000)
        c = empirical_copula(SampleSet.from_indices(idx, 4), g=20, rng=RngStream(6))
        assert len(c.cdf) == 6
        for grid in c.cdf.values():
            check_axioms(grid)

    def test_joint_mode_axioms(self):
        data = RngStream(7).generator.normal(size=(500, 3))
        c = empirical_copula(data, mode="joint", g=8, rng=RngStream(8))
        assert c.joint.shape == (9, 9, 9) and c.joint[-1, -1, -1] == pytest.approx(1.0)
        assert np.allclose(c.joint[0], 0) and np.allclose(c.joint[-1, :, :], c.pair(1, 2))

    def test_degenerate_flagged(self):
        data = np.column_stack([np.zeros(100), np.arange(100.0)])
        c = empirical_copula(data, g=10, rng=RngStream(9))
        assert c.degenerate == [0]
        check_axioms(c.pair())

    def test_randomized_ties_give_distinct_ranks(self):
        u = pseudo_observations(np.array([0, 0, 0, 1, 1]), RngStream(10))
        assert sorted(u[:, 0].tolist()) == [0.2, 0.4, 0.6, 0.8, 1.0]

    def test_monotone_invariance(self):
        data = RngStream(11).generator.normal(size=(2000, 2))
        transformed = np.column_stack([np.exp(data[:, 0]), data[:, 1] ** 3])
        a = empirical_copula(data, g=25, rng=RngStream(12))
        b = empirical_copula(transformed, g=25, rng=RngStream(12))
        assert np.max(np.abs(a.pair() - b.pair())) <= 1e-12

    def test_too_few(self):
        with pytest.raises(InputError):
            empirical_copula(np.zeros((1, 2)))

    def test_csv_columns(self):
        data = RngStream(13).generator.normal(size=(200, 2))
        text = empirical_copula(data, g=4, rng=RngStream(14)).to_csv()
        lines = text.strip().splitlines()
        assert lines[0] == "u,v,C,density" and len(lines) == 1 + 25


class TestGaussian:
    def test_independence(self):
        p, se = gaussian_copula_cdf(GaussianCopulaSpec.bivariate(0.0), (0.3, 0.6), 100_000, RngStream(1))
        assert abs(p - 0.18) <= 4 * se

    @pytest.mark.parametrize("u", [0.1, 0.5, 0.9])
    def test_uniform_margin(self, u):
        assert gaussian_copula_cdf_exact(0.7, u, 1.0) == pytest.approx(u)

    def test_quadrature_oracle(self):
        dens = multivariate_normal(mean=[0, 0], cov=[[1, 0.7], [0.7, 1]]).pdf
        quad, _ = integrate.dblquad(lambda y, x: dens([x, y]), -12, 0, -12, 0, epsabs=1e-10)
        p, se = gaussian_copula_cdf(GaussianCopulaSpec.bivariate(0.7), (0.5, 0.5), 100_000, RngStream(2))
        assert abs(p - quad) <= 3 * se
        assert gaussian_copula_cdf_exact(0.7, 0.5, 0.5) == pytest.approx(quad, abs=1e-6)
        assert quad == pytest.approx(0.25 + math.asin(0.7) / (2 * math.pi), abs=1e-8)

    def test_rho_one_rejected(self):
        with pytest.raises(InputError):
            gaussian_copula_cdf_exact(1.0, 0.5, 0.5)
        with pytest.raises(InputError):
            GaussianCopulaSpec.bivariate(1.0)

    @pytest.mark.parametrize("r", [[[1, 0.2], [0.3, 1]], [[2, 0], [0, 1]],
                                   [[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1]]])
    def test_spec_validation(self, r):
        with pytest.raises(InputError):
            GaussianCopulaSpec(np.array(r, dtype=float))

    def test_grid_axioms(self):
        c = gaussian_copula_grid(GaussianCopulaSpec.bivariate(0.7), g=30)
        check_axioms(c.pair())
        assert c.density[(0, 1)].sum() == pytest.approx(1.0)

    def test_samples_have_uniform_margins(self):
        s = GaussianCopulaSpec.bivariate(0.7).sample(20_000, RngStream(3))
        assert np.all((s > 0) & (s < 1))
        assert abs(s.mean() - 0.5) < 0.01
        assert pairwise_correlations(s)[0, 1] == pytest.approx(6 / math.pi * math.asin(0.35), abs=0.02)


class TestMetrics:
    def test_kl_identical(self):
        p = np.array([[0.1, 0.2], [0.3, 0.4]])
        assert kl_divergence(p, p) == 0.0

    @settings(max_examples=50)
    @given(st.lists(st.floats(0.01, 1), min_size=4, max_size=4), st.lists(st.floats(0.01, 1), min_size=4, max_size=4))
    def test_kl_gibbs(self, p, q):
        assert kl_divergence(p, q) >= 0.0

    def test_kl_errors(self):
        with pytest.raises(InputError):
            kl_divergence([0.5, 0.5], [1.0])
        with pytest.raises(InputError):
            kl_divergence([0.5, 0.5], [1.0, 0.0])

    def test_smoothing_keeps_cells_positive(self):
        d = smoothed_density(np.array([0.1, 0.2]), np.array([0.1, 0.2]), 10)
        assert np.all(d > 0) and d.sum() == pytest.approx(1.0)

    def test_distance_identical(self):
        c = gaussian_copula_grid(GaussianCopulaSpec.bivariate(0.3), 20)
        assert copula_distance(c, c) == 0.0

    def test_distance_independence_vs_comonotone(self):
        g = 400
        t = np.linspace(0, 1, g + 1)
        ind = EmpiricalCopula(2, g, {(0, 1): np.outer(t, t)})
        com = EmpiricalCopula(2, g, {(0, 1): np.minimum.outer(t, t)})
        assert copula_distance(ind, com) == pytest.approx(1 / 12, abs=1e-4)

    def test_distance_shape_mismatch(self):
        with pytest.raises(InputError):
            grid_l1(np.zeros((3, 3)), np.zeros((4, 4)))
        a = gaussian_copula_grid(GaussianCopulaSpec.bivariate(0.3), 10)
        b = gaussian_copula_grid(GaussianCopulaSpec.bivariate(0.3), 12)
        with pytest.raises(InputError):
            copula_distance(a, b)

    def test_corr_perfect(self):
        x = np.arange(10.0)
        assert pairwise_correlations(np.column_stack([x, 2 * x + 1]))[0, 1] == pytest.approx(1.0)

    def test_corr_fisher_bound(self):
        n = 10_000
        data = RngStream(4).generator.normal(size=(n, 2))
        assert abs(pairwise_correlations(data)[0, 1]) < 4 / math.sqrt(n)

    def test_corr_zero_variance(self):
        with pytest.raises(InputError):
            pairwise_correlations(np.column_stack([np.ones(5), np.arange(5.0)]))

    @given(st.integers(0, 1000))
    def test_corr_symmetric_unit_diagonal(self, seed):
        c = pairwise_correlations(np.random.default_rng(seed).normal(size=(20, 3)))
        assert np.array_equal(c, c.T) and np.all(np.diag(c) == 1.0)


class TestDkw:
    def test_value(self):
        assert dkw_bound(1000, 0.1) == pytest.approx(2 * math.exp(-20))
        assert dkw_bound(1000, 0.1) == pytest.approx(4.12e-9, rel=1e-3)

    def test_limit(self):
        assert dkw_bound(10**7, 0.1) == 0.0

    @given(st.integers(1, 10_000), st.floats(1e-3, 1), st.integers(1, 4))
    def test_decreasing(self, k, eps, n):
        assert dkw_bound(k + 1, eps, n) <= dkw_bound(k, eps, n)

    def test_errors(self):
        with pytest.raises(InputError):
            dkw_bound(0, 0.1)

    def test_sup_deviation_bounds_grid_value(self):
        data = RngStream(5).generator.uniform(size=(2000, 2))
        dev = sup_deviation_2d(data[:, 0], data[:, 1], lambda u, v: u * v, 100)
        assert 0.02 <= dev < 0.1


@pytest.fixture(scope="module")
def fitted():
    cov = [[1.0, 0.5], [0.5, 1.0]]
    data = RngStream(6).generator.multivariate_normal([0, 0], cov, size=3000)
    c = empirical_copula(data, g=50, rng=RngStream(7))
    return data, c, [empirical_cdf(data, 0), empirical_cdf(data, 1)]


class TestSklar:

    def test_below_support(self, fitted):
        _, c, m = fitted
        assert sklar_recompose(c, m, [-100, -100]) == 0.0

    def test_above_support(self, fitted):
        _, c, m = fitted
        assert sklar_recompose(c, m, [100, 100]) == pytest.approx(1.0)

    def test_matches_joint_ecdf(self, fitted):
        data, c, m = fitted
        pts = RngStream(8).generator.normal(size=(200, 2))
        dev = max(abs(sklar_recompose(c, m, p) - joint_empirical_cdf(data, p)) for p in pts)
        assert dev < 2 / 50 + math.sqrt(math.log(4 / 1e-3) / (2 * 3000))

    def test_dimension_mismatch(self, fitted):
        _, c, m = fitted
        with pytest.raises(InputError):
            sklar_recompose(c, m[:1], [0, 0])
