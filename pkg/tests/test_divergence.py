"""Divergence measures against quadrature oracles and closed forms."""

import math

import numpy as np
import pytest
from scipy import integrate

from ensim.core import DataError, Ensemble, NumericalError
from ensim.divergence import (LN2, ComparisonReport, fit_pca,
                              frechet_features, histogram_bin_count, jsd_1d,
                              jsd_knn, noise_floor, project, tv_distance_2d)

from conftest import make_image


def norm_pdf(mu, sigma):
    return lambda x: math.exp(-0.5 * ((x - mu) / sigma) ** 2) \
        / (sigma * math.sqrt(2 * math.pi))


def jsd_quadrature_1d(pdf_p, pdf_q, lo, hi):
    def integrand(x):
        p, q = pdf_p(x), pdf_q(x)
        m = 0.5 * (p + q)
        total = 0.0
        if p > 0:
            total += 0.5 * p * math.log(p / m)
        if q > 0:
            total += 0.5 * q * math.log(q / m)
        return total
    value, _ = integrate.quad(integrand, lo, hi, limit=200)
    return value


def jsd_quadrature_2d_gaussians(mu1, mu2, sigma=1.0, grid=400, span=8.0):
    lo = min(*mu1, *mu2) - span
    hi = max(*mu1, *mu2) + span
    xs = np.linspace(lo, hi, grid)
    x, y = np.meshgrid(xs, xs)

    def pdf(mu):
        return np.exp(-0.5 * (((x - mu[0]) / sigma) ** 2
                              + ((y - mu[1]) / sigma) ** 2)) \
            / (2 * np.pi * sigma**2)

    p, q = pdf(mu1), pdf(mu2)
    m = 0.5 * (p + q)
    cell = (xs[1] - xs[0]) ** 2
    terms = 0.5 * p * np.log(np.maximum(p, 1e-300) / m) \
        + 0.5 * q * np.log(np.maximum(q, 1e-300) / m)
    return float(terms.sum() * cell)


class TestJsd1d:
    def test_identical_samples_zero(self, gen):
        a = gen.normal(size=5000)
        assert jsd_1d(a, a) == 0.0

    def test_disjoint_supports_ln2(self, gen):
        a = gen.normal(size=2000)
        assert abs(jsd_1d(a, a + 1000.0) - LN2) <= 1e-12

    def test_matches_quadrature_oracle(self, gen):
        true_value = jsd_quadrature_1d(norm_pdf(0, 1), norm_pdf(1, 1), -10, 11)
        a = gen.normal(0, 1, size=100000)
        b = gen.normal(1, 1, size=100000)
        estimate = jsd_1d(a, b)
        assert abs(estimate - true_value) / true_value < 0.05

    def test_symmetric_and_bounded(self, gen):
        a = gen.normal(0, 1, 3000)
        b = gen.exponential(1, 3000)
        assert jsd_1d(a, b) == pytest.approx(jsd_1d(b, a), abs=1e-12)
        assert 0.0 <= jsd_1d(a, b) <= LN2

    def test_constant_equal_samples(self):
        assert jsd_1d([2.0, 2.0], [2.0, 2.0, 2.0]) == 0.0

    def test_bin_rule_floor(self, gen):
        assert histogram_bin_count(np.array([1.0, 1.0, 2.0])) == 32
        big = gen.normal(size=100000)
        assert histogram_bin_count(big) > 32


class TestJsdKnn:
    def test_same_distribution_floor(self, gen):
        a = gen.normal(0, 1, (5000, 17))
        b = gen.normal(0, 1, (5000, 17))
        assert jsd_knn(a, b, k=5, seed=0) < 0.02

    def test_large_shift_near_ln2(self, gen):
        a = gen.normal(0, 1, (2000, 17))
        assert jsd_knn(a, a + 10.0, k=5, seed=0) > 0.6

    def test_matches_2d_quadrature(self, gen):
        true_value = jsd_quadrature_2d_gaussians((0, 0), (1.5, 0))
        a = gen.normal(0, 1, (6000, 2))
        b = gen.normal(0, 1, (6000, 2))
        b[:, 0] += 1.5
        estimate = jsd_knn(a, b, k=5, seed=1)
        assert abs(estimate - true_value) / true_value < 0.15

    def test_duplicate_points_are_jittered(self, gen):
        a = np.repeat(gen.normal(size=(50, 3)), 3, axis=0)
        b = np.repeat(gen.normal(size=(50, 3)), 3, axis=0)
        value = jsd_knn(a, b, k=2, seed=0)
        assert 0.0 <= value <= LN2

    def test_shape_validation(self, gen):
        with pytest.raises(DataError):
            jsd_knn(gen.normal(size=(10, 2)), gen.normal(size=(10, 3)))
        with pytest.raises(DataError):
            jsd_knn(gen.normal(size=(4, 2)), gen.normal(size=(10, 2)), k=5)


class TestPca:
    def test_single_axis_variance(self, gen):
        t = gen.normal(size=200)
        data = np.column_stack([t, np.full(200, 3.0), 2 * t])
        model = fit_pca(data, "custom", standardize=False)
        assert model.explained_variance[1] == pytest.approx(0.0, abs=1e-12)
        direction = np.abs(model.components[0])
        assert direction[1] == pytest.approx(0.0, abs=1e-12)

    def test_components_orthonormal(self, gen):
        data = gen.normal(size=(300, 5))
        model = fit_pca(data, "custom")
        gram = model.components @ model.components.T
        assert np.max(np.abs(gram - np.eye(2))) < 1e-10

    def test_rotation_equivariance_without_standardization(self, gen):
        data = gen.normal(size=(400, 2)) @ np.array([[2.0, 0.3], [0.3, 0.5]])
        theta = 0.7
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        base = project(fit_pca(data, "x", standardize=False), data)
        rotated = project(fit_pca(data @ rot.T, "x", standardize=False),
                          data @ rot.T)
        for col in range(2):
            delta = min(np.max(np.abs(rotated[:, col] - base[:, col])),
                        np.max(np.abs(rotated[:, col] + base[:, col])))
            assert delta < 1e-8

    def test_zero_variance_column_dropped(self, gen):
        data = np.column_stack([gen.normal(size=100), np.ones(100),
                                gen.normal(size=100)])
        model = fit_pca(data, "x")
        assert model.kept_columns.tolist() == [0, 2]

    def test_sign_convention_deterministic(self, gen):
        data = gen.normal(size=(100, 4))
        m1 = fit_pca(data, "x")
        m2 = fit_pca(data.copy(), "x")
        assert np.array_equal(m1.components, m2.components)
        for row in m1.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_too_few_rows(self, gen):
        with pytest.raises(DataError):
            fit_pca(gen.normal(size=(2, 4)), "x")


class TestTv2d:
    def test_identical_zero(self, gen):
        a = gen.normal(size=(1000, 2))
        assert tv_distance_2d(a, a) == 0.0

    def test_disjoint_clusters_one(self, gen):
        a = gen.normal(size=(2000, 2))
        assert tv_distance_2d(a, a + 100.0) == pytest.approx(1.0, abs=1e-12)

    def test_overlapping_gaussians_match_quadrature(self, gen):
        # TV(N(0,I), N(d,I)) = 2*Phi(|d|/2) - 1 on the plane
        shift = 1.0
        from scipy.stats import norm as norm_dist
        true_tv = 2 * norm_dist.cdf(shift / 2) - 1
        a = gen.normal(size=(100000, 2))
        b = gen.normal(size=(100000, 2))
        b[:, 0] += shift
        estimate = tv_distance_2d(a, b, grid=64)
        assert abs(estimate - true_tv) / true_tv < 0.10

    def test_symmetry_and_triangle_on_fixed_grid(self, gen):
        bounds = ((-6.0, 8.0), (-6.0, 6.0))
        a = gen.normal(size=(3000, 2))
        b = gen.normal(size=(3000, 2)) + np.array([1.0, 0.0])
        c = gen.normal(size=(3000, 2)) + np.array([2.0, 0.0])
        d_ab = tv_distance_2d(a, b, bounds=bounds)
        d_ba = tv_distance_2d(b, a, bounds=bounds)
        assert d_ab == pytest.approx(d_ba, abs=1e-12)
        d_ac = tv_distance_2d(a, c, bounds=bounds)
        d_bc = tv_distance_2d(b, c, bounds=bounds)
        assert d_ac <= d_ab + d_bc + 1e-12


class TestFrechet:
    def test_identical_zero(self, gen):
        a = gen.normal(size=(500, 4))
        assert frechet_features(a, a) <= 1e-8

    def test_1d_closed_form_exact(self, gen):
        a = gen.normal(0.0, 1.0, size=(400, 1))
        b = gen.normal(2.0, 1.7, size=(300, 1))
        mu_a, mu_b = a.mean(), b.mean()
        sd_a, sd_b = a.std(ddof=1), b.std(ddof=1)
        closed = (mu_a - mu_b) ** 2 + (sd_a - sd_b) ** 2
        assert frechet_features(a, b) == pytest.approx(closed, abs=1e-12)

    def test_diagonal_closed_form(self, gen):
        a = gen.normal(size=(5000, 3)) * np.array([1.0, 2.0, 0.5])
        b = gen.normal(size=(5000, 3)) * np.array([1.5, 1.0, 0.25]) + 1.0
        general = frechet_features(a, b)
        mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
        cov_a = np.cov(a, rowvar=False)
        cov_b = np.cov(b, rowvar=False)
        # oracle ignores the (small) off-diagonal sample covariance
        diag = np.sum((mu_a - mu_b) ** 2) + np.sum(
            (np.sqrt(np.diag(cov_a)) - np.sqrt(np.diag(cov_b))) ** 2)
        assert general == pytest.approx(diag, rel=0.02)
        # exact diagonal check through explicitly decorrelated data
        za = gen.normal(size=(4, 2))
        za = (za - za.mean(0))
        za[:, 1] -= za[:, 0] * (za[:, 0] @ za[:, 1]) / (za[:, 0] @ za[:, 0])
        zb = 2.0 * za + 3.0
        cov_a = np.cov(za, rowvar=False)
        cov_b = np.cov(zb, rowvar=False)
        closed = np.sum((za.mean(0) - zb.mean(0)) ** 2) + np.sum(
            (np.sqrt(np.diag(cov_a)) - np.sqrt(np.diag(cov_b))) ** 2)
        assert frechet_features(za, zb) == pytest.approx(closed, abs=1e-8)

    def test_orthogonal_invariance(self, gen):
        a = gen.normal(size=(800, 5))
        b = gen.normal(size=(800, 5)) * 1.3 + 0.5
        q, _ = np.linalg.qr(gen.normal(size=(5, 5)))
        base = frechet_features(a, b)
        rotated = frechet_features(a @ q, b @ q)
        assert rotated == pytest.approx(base, rel=1e-8)

    def test_one_row_rejected(self, gen):
        with pytest.raises(NumericalError):
            frechet_features(gen.normal(size=(1, 3)), gen.normal(size=(9, 3)))


class TestNoiseFloor:
    def test_deterministic_given_seed(self, gen):
        images = [make_image(gen.normal(size=(8, 8))) for _ in range(40)]
        e = Ensemble(images, ["x"] * 40)

        def metric(x, y):
            return jsd_1d([im.data.mean() for im in x.images],
                          [im.data.mean() for im in y.images])

        assert noise_floor(e, metric, seed=5) == noise_floor(e, metric, seed=5)
        assert noise_floor(e, metric, seed=5) >= 0.0

    def test_floor_small_for_large_samples(self, gen):
        # split-half JSD of 1e4 i.i.d. scalar samples stays under 0.01 nats
        from ensim.core import split_indices
        samples = gen.normal(0.5, 0.03, size=10000)
        i1, i2 = split_indices(10000, seed=2)
        assert jsd_1d(samples[i1], samples[i2]) < 0.01

    def test_too_small_ensemble(self, gen):
        e = Ensemble([make_image(gen.normal(size=(4, 4)))] * 3, ["x"] * 3)
        with pytest.raises(DataError):
            noise_floor(e, lambda a, b: 0.0, seed=0)


class TestComparisonReport:
    def test_round_trip_and_validation(self):
        report = ComparisonReport(
            jsd_by_statistic={"snr2": 0.1},
            tv_by_family={"glcm": 0.4},
            frechet_features=2.5,
            noise_floors={"jsd_by_statistic": {"snr2": 0.01}},
            metadata={"n_a": 10},
        )
        clone = ComparisonReport.from_dict(report.to_dict())
        assert clone.jsd_by_statistic == report.jsd_by_statistic
        with pytest.raises(NumericalError):
            ComparisonReport({"x": 1.0}, {}, 0.0, {})
        with pytest.raises(NumericalError):
            ComparisonReport({}, {"f": 1.5}, 0.0, {})
