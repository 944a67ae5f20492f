import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from privgcn.noise import (
    child_seed,
    make_rng,
    sample_direction,
    sample_noise_column,
    sample_noise_matrix,
    sample_radii,
    sample_radius,
)


class TestRadius:
    @pytest.mark.parametrize("d,beta", [(1, 1.0), (8, 2.0), (64, 0.5)])
    def test_erlang_moments(self, d, beta):
        r = sample_radii(d, beta, make_rng(d), 100_000)
        assert abs(r.mean() / (d / beta) - 1) < 0.02
        assert abs(r.var() / (d / beta**2) - 1) < 0.05

    def test_scalar_matches_vector(self):
        a = [sample_radius(5, 2.0, r) for r in [make_rng(3)]]
        b = sample_radii(5, 2.0, make_rng(3), 1)
        assert_allclose(a, b, rtol=1e-15)

    def test_scale_family(self):
        base = sample_radii(6, 1.0, make_rng(1), 20_000)
        scaled = sample_radii(6, 2.0, make_rng(2), 20_000)
        assert stats.ks_2samp(base / 2.0, scaled).pvalue > 0.01

    def test_matches_gamma_law(self):
        r = sample_radii(4, 3.0, make_rng(9), 20_000)
        assert stats.kstest(r, stats.gamma(a=4, scale=1 / 3.0).cdf).pvalue > 0.01

    @pytest.mark.parametrize("args", [(0, 1.0), (2.5, 1.0), (3, 0.0), (3, -1.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            sample_radius(*args, make_rng(0))


class TestDirection:
    def test_unit_norm(self):
        rng = make_rng(0)
        for d in (1, 2, 7):
            assert_allclose(np.linalg.norm(sample_direction(d, rng)), 1.0, rtol=1e-15)

    def test_coordinate_means(self):
        rng = make_rng(4)
        U = np.array([sample_direction(5, rng) for _ in range(100_000)])
        sigma = np.sqrt(1 / 5 / U.shape[0])
        assert np.all(np.abs(U.mean(axis=0)) < 3 * sigma)

    def test_sign_symmetry(self):
        rng = make_rng(5)
        v = np.ones(8) / math.sqrt(8)
        proj = np.array([sample_direction(8, rng) @ v for _ in range(20_000)])
        assert stats.binomtest(int((proj > 0).sum()), proj.size).pvalue > 0.01

    def test_angles_uniform_in_plane(self):
        rng = make_rng(6)
        U = np.array([sample_direction(2, rng) for _ in range(36_000)])
        angles = np.mod(np.arctan2(U[:, 1], U[:, 0]), 2 * np.pi)
        counts, _ = np.histogram(angles, bins=36, range=(0, 2 * np.pi))
        assert stats.chisquare(counts).pvalue > 0.01


class TestNoiseMatrix:
    def test_column_norms_are_radii(self):
        nm = sample_noise_matrix(10, 4, 0.7, 42)
        assert_allclose(np.linalg.norm(nm.B, axis=0), nm.radii, rtol=1e-12)
        assert nm.seed == 42

    def test_deterministic(self):
        a, b = sample_noise_matrix(6, 3, 1.5, child_seed(3, 1)), sample_noise_matrix(6, 3, 1.5, child_seed(3, 1))
        assert_array_equal(a.B, b.B)
        assert not np.array_equal(a.B, sample_noise_matrix(6, 3, 1.5, child_seed(4, 1)).B)

    def test_root_not_mutated(self):
        root = child_seed(0, 1)
        first = sample_noise_matrix(3, 2, 1.0, root).B
        assert_array_equal(first, sample_noise_matrix(3, 2, 1.0, root).B)

    def test_columns_independent_of_count(self):
        a = sample_noise_matrix(5, 2, 1.0, 11).B
        b = sample_noise_matrix(5, 4, 1.0, 11).B
        assert_array_equal(a, b[:, :2])

    def test_infinite_beta(self):
        nm = sample_noise_matrix(4, 3, math.inf, 0)
        assert_array_equal(nm.B, np.zeros((4, 3)))

    def test_radii_uncorrelated(self):
        R = np.array([sample_noise_matrix(3, 2, 1.0, s).radii for s in range(10_000)])
        assert abs(np.corrcoef(R.T)[0, 1]) < 0.05

    def test_column_norm(self):
        v = sample_noise_column(7, 2.0, make_rng(1))
        r = sample_radius(7, 2.0, make_rng(1))
        assert_allclose(np.linalg.norm(v), r, rtol=1e-12)
