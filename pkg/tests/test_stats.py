"""Speckle statistics, windowed autocorrelation, fits, composition ratios."""

import math

import numpy as np
import pytest

from ensim.clb import ClbConfig, ClbLayer, DegradeConfig, degrade, generate_clb
from ensim.core import ConfigError, Ensemble, NumericalError, RngStream
from ensim.stats import (autocorrelation_radial, correlation_length,
                         decorrelated_subsample, fg_ratio, gaussian_fit,
                         gray_level_pdf, ks_statistic_fitted, papoulis_window,
                         pdf_peaks, snr_stats, windowed_autocorrelation)

from conftest import make_image


class TestSnrStats:
    def test_snr2_half_gives_nhat_one(self):
        # intensity {0, 0, 6}: mean 2, variance 8 -> snr2 = 0.5 exactly
        intensity = np.tile(np.array([0.0, 0.0, 6.0]), 12)
        s = snr_stats(make_image(np.sqrt(intensity).reshape(6, 6)))
        assert s.snr2 == pytest.approx(0.5, rel=1e-12)
        assert s.n_hat == pytest.approx(1.0, rel=1e-12)
        assert s.saturation == "ok"

    def test_snd1_mean_snr2_maps_to_reported_nhat(self):
        # Eq. algebra at snr2 = 0.41 -> n_hat = 0.6949...
        assert 0.41 / (1 - 0.41) == pytest.approx(0.694915, abs=1e-6)

    def test_unit_snr2_is_saturated(self):
        # intensity {0, 2}: mean 1, std 1 -> snr2 = 1 exactly
        intensity = np.tile(np.array([0.0, 2.0]), 18)
        s = snr_stats(make_image(np.sqrt(intensity).reshape(6, 6)))
        assert s.snr2 == pytest.approx(1.0, rel=1e-12)
        assert s.n_hat is None and s.saturation == "saturated"

    def test_exponential_intensity_saturates(self, gen):
        intensity = gen.exponential(1.0, size=(1000, 1000))
        s = snr_stats(make_image(np.sqrt(intensity)))
        assert s.snr2 == pytest.approx(1.0, abs=0.01)
        if s.snr2 >= 1.0:
            assert s.n_hat is None and s.saturation == "saturated"
        else:
            assert s.n_hat > 50

    def test_scale_invariance(self, gen):
        data = gen.rayleigh(1.0, size=(32, 32))
        a = snr_stats(make_image(data))
        b = snr_stats(make_image(3.7 * data))
        assert b.snr2 == pytest.approx(a.snr2, rel=1e-12)
        assert b.n_hat == pytest.approx(a.n_hat, rel=1e-9)

    def test_constant_image_raises(self):
        with pytest.raises(NumericalError):
            snr_stats(make_image(np.full((4, 4), 2.0)))

    def test_intensity_input_flag(self, gen):
        data = gen.exponential(1.0, size=(64, 64))
        direct = snr_stats(make_image(data), treat_as_intensity=True)
        via_envelope = snr_stats(make_image(np.sqrt(data)))
        assert direct.snr2 == pytest.approx(via_envelope.snr2, rel=1e-12)


class TestGrayLevelPdf:
    def test_constant_single_bin(self):
        e = Ensemble([make_image(np.full((4, 4), 2.0))], ["x"])
        pdf = gray_level_pdf(e, bins=10)
        assert np.count_nonzero(pdf.densities) == 1

    def test_uniform_density(self, gen):
        e = Ensemble([make_image(gen.uniform(size=(100, 100)))], ["x"])
        pdf = gray_level_pdf(e, bins=10)
        widths = np.diff(pdf.bin_edges)
        assert (pdf.densities * widths).sum() == pytest.approx(1.0)
        se = math.sqrt(0.1 * 0.9 / 10000) / 0.1
        assert np.abs(pdf.densities - 1.0).max() < 3 * se

    def test_integrates_to_one(self, gen):
        e = Ensemble([make_image(gen.normal(size=(32, 32)))
                      for _ in range(3)], list("abc"))
        pdf = gray_level_pdf(e, bins=64)
        assert (pdf.densities * np.diff(pdf.bin_edges)).sum() == \
            pytest.approx(1.0)


class TestPapoulis:
    def test_closed_form_values(self):
        w = papoulis_window(101)
        center = w[50, 50]
        assert center == pytest.approx(1.0, abs=1e-14)
        assert abs(w[0, 50]) < 1e-15 and abs(w[100, 50]) < 1e-15
        # 1D value at t = 0.5 equals 1/pi
        assert w[75, 50] == pytest.approx(1 / math.pi, rel=1e-12)

    def test_separable_and_bounded(self):
        w = papoulis_window(32)
        assert w.max() <= 1.0 + 1e-12
        assert w.min() >= -1e-12


class TestAutocorrelation:
    def test_r0_is_exactly_one(self, gen):
        images = [make_image(gen.normal(size=(16, 16))) for _ in range(5)]
        profile = autocorrelation_radial(images)
        assert profile.values[0] == 1.0
        assert profile.radii[0] == 0.0
        assert (np.diff(profile.radii) > 0).all()

    def test_fft_equals_direct_spatial(self, gen):
        for _ in range(50):
            data = gen.normal(size=(16, 16))
            fast = windowed_autocorrelation(data)
            w = papoulis_window(16)
            m = (data * w).sum() / w.sum()
            g = (data - m) * w
            direct = np.zeros((16, 16))
            for dx in range(16):
                for dy in range(16):
                    direct[dx, dy] = np.sum(
                        g * np.roll(np.roll(g, -dx, 0), -dy, 1))
            assert np.max(np.abs(fast - direct)) <= 1e-8 * np.abs(direct).max()

    def test_white_noise_profile_vanishes(self, gen):
        images = [make_image(gen.normal(size=(64, 64))) for _ in range(500)]
        profile = autocorrelation_radial(images)
        assert np.abs(profile.values[2:]).max() < 0.02

    def test_profile_bounded_after_normalization(self, gen):
        images = [make_image(gen.normal(size=(32, 32)) +
                             np.linspace(0, 1, 32)[None, :]) for _ in range(20)]
        profile = autocorrelation_radial(images)
        assert profile.values.max() <= 1.0 + 1e-9
        assert profile.values.min() >= -1.0 - 1e-9

    def test_constant_ensemble_raises(self):
        images = [make_image(np.full((16, 16), 3.0))] * 4
        with pytest.raises(NumericalError):
            autocorrelation_radial(images)

    def test_blurred_profile_dominates_over_short_range(self):
        cfg = ClbConfig(image_size=64, layers=(ClbLayer(
            mean_clusters=10, mean_blobs=8, cluster_spread=5.0,
            blob_scale_lx=3.0, blob_scale_ly=2.0, alpha=1.5, beta=1.5,
            amplitude=1.0),), dc_offset=0.0)
        d = DegradeConfig(blur_sigma=2.0, lpf_cutoff_fraction=0.5)
        base = RngStream(15)
        originals = [generate_clb(cfg, base.derive(i)) for i in range(200)]
        blurred = [degrade(im, d) for im in originals]
        p_orig = autocorrelation_radial(originals)
        p_blur = autocorrelation_radial(blurred)
        r = slice(1, 11)
        assert (p_blur.values[r] >= p_orig.values[r] - 1e-9).all()

    def test_correlation_length_interpolates(self):
        from ensim.stats import RadialProfile
        profile = RadialProfile(np.arange(5.0),
                                np.array([1.0, 0.8, 0.6, 0.4, 0.2]))
        assert correlation_length(profile) == pytest.approx(2.5)


class TestGaussianFit:
    def test_recovers_parameters(self, gen):
        samples = gen.normal(0.41, 0.024, size=100000)
        fit = gaussian_fit(samples)
        assert fit.mu == pytest.approx(0.41, abs=1e-3)
        assert fit.sigma == pytest.approx(0.024, abs=1e-3)
        assert fit.mse >= 0.0

    def test_equal_samples_raise(self):
        with pytest.raises(NumericalError):
            gaussian_fit(np.full(100, 1.5))
        with pytest.raises(NumericalError):
            gaussian_fit([1.0])

    def test_bimodal_mse_much_larger_than_matched_gaussian(self, gen):
        bimodal = np.concatenate([gen.normal(-3, 0.5, 5000),
                                  gen.normal(3, 0.5, 5000)])
        fit_b = gaussian_fit(bimodal)
        matched = gen.normal(fit_b.mu, fit_b.sigma, size=10000)
        fit_m = gaussian_fit(matched)
        assert fit_b.mse > 10 * fit_m.mse


class TestFgRatio:
    def test_exact_ratio_two(self):
        n = 100
        values = np.full(n * n, 0.5)
        values[:3000] = 1.0   # 30% fat
        values[3000:4500] = 2.0  # 15% gland
        r = fg_ratio(make_image(values.reshape(n, n)), 1.0, 2.0, 0.1)
        assert r.f_fraction == 0.30 and r.g_fraction == 0.15
        assert r.ratio == 2.0
        assert r.log_ratio == pytest.approx(math.log(2.0))

    def test_missing_gland_is_null(self):
        img = make_image(np.full((4, 4), 1.0))
        r = fg_ratio(img, 1.0, 2.0, 0.1)
        assert r.g_fraction == 0.0 and r.log_ratio is None and r.ratio is None

    def test_permutation_invariance(self, gen):
        values = gen.choice([0.2, 1.0, 2.0], size=64, p=[0.5, 0.3, 0.2])
        a = fg_ratio(make_image(values.reshape(8, 8)), 1.0, 2.0, 0.1)
        b = fg_ratio(make_image(gen.permutation(values).reshape(8, 8)),
                     1.0, 2.0, 0.1)
        assert (a.f_fraction, a.g_fraction) == (b.f_fraction, b.g_fraction)

    def test_overlapping_windows_rejected(self):
        with pytest.raises(ConfigError):
            fg_ratio(make_image(np.zeros((2, 2))), 1.0, 1.1, 0.2)


class TestSubsampleAndKs:
    def test_subsample_counts(self, gen):
        images = [make_image(gen.normal(size=(32, 32))) for _ in range(10)]
        sub = decorrelated_subsample(images, stride=8, max_per_image=16)
        assert sub.size == 10 * 16

    def test_ks_on_true_rayleigh(self, gen):
        values = gen.rayleigh(2.0, size=20000)
        stat, crit = ks_statistic_fitted(values, "rayleigh")
        assert stat < crit
        stat, crit = ks_statistic_fitted(values**2, "exponential")
        assert stat < crit

    def test_ks_rejects_wrong_law(self, gen):
        values = gen.uniform(0, 1, size=20000)
        stat, crit = ks_statistic_fitted(values, "rayleigh")
        assert stat > crit


class TestPdfPeaks:
    def test_four_modes_recovered(self, gen):
        samples = np.concatenate([gen.normal(c, 0.05, 400)
                                  for c in (-1.0, 0.0, 1.0, 2.0)])
        peaks = pdf_peaks(samples, bins=50)
        assert len(peaks) == 4
        assert np.max(np.abs(np.sort(peaks) - [-1.0, 0.0, 1.0, 2.0])) < 0.1

    def test_single_mode(self, gen):
        peaks = pdf_peaks(gen.normal(0, 1, 2000), bins=40)
        assert len(peaks) == 1
