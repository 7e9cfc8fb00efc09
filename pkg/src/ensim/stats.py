"""Per-image and ensemble statistics.

Covers the intensity signal-to-noise ratio and scatterer-count estimate of
speckle envelopes, pooled gray-level PDFs, taper-corrected radial
autocorrelation profiles, Gaussian fits of sample PDFs, and the
fat-to-glandular composition ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.signal import find_peaks

from .core import ConfigError, Ensemble, Image, NumericalError

# per-image scatterer estimates above this are reported as near-saturated
NEAR_SATURATION_N = 5.0

SATURATION_OK = "ok"
SATURATION_NEAR = "near"
SATURATION_SATURATED = "saturated"


@dataclass(frozen=True)
class SpeckleStats:
    """Intensity statistics of one envelope image.

    snr2 is (mu_I / sigma_I)^2 over the squared pixel values; n_hat, the
    scatterers-per-resolution-cell estimate snr2 / (1 - snr2), is None once
    snr2 >= 1 (fully developed limit) and flagged accordingly.
    """

    mu_i: float
    sigma_i: float
    snr2: float
    n_hat: Optional[float]
    saturation: str


@dataclass(frozen=True)
class Pdf1D:
    bin_edges: np.ndarray
    densities: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


@dataclass(frozen=True)
class RadialProfile:
    radii: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class FgRatio:
    """Fat / glandular pixel fractions and their log ratio (None if undefined)."""

    f_fraction: float
    g_fraction: float
    log_ratio: Optional[float]

    @property
    def ratio(self) -> Optional[float]:
        if self.g_fraction == 0.0:
            return None
        return self.f_fraction / self.g_fraction


def _as_data(img) -> np.ndarray:
    if isinstance(img, Image):
        return img.data
    return np.asarray(img, dtype=np.float64)


def _iter_images(source):
    if isinstance(source, Ensemble):
        return iter(source.images)
    return iter(source)


def snr_stats(img, treat_as_intensity: bool = False) -> SpeckleStats:
    """Intensity SNR^2 and scatterer-count estimate of one image.

    The image is an envelope by default (intensity = pixel value squared);
    pass treat_as_intensity=True for externally supplied intensity data.
    """
    data = _as_data(img)
    intensity = data if treat_as_intensity else data**2
    mu = float(intensity.mean())
    sigma = float(intensity.std())
    if sigma == 0.0:
        raise NumericalError("constant image: intensity variance is zero")
    snr2 = (mu / sigma) ** 2
    if snr2 >= 1.0:
        return SpeckleStats(mu, sigma, snr2, None, SATURATION_SATURATED)
    n_hat = snr2 / (1.0 - snr2)
    flag = SATURATION_NEAR if n_hat >= NEAR_SATURATION_N else SATURATION_OK
    return SpeckleStats(mu, sigma, snr2, n_hat, flag)


def gray_level_pdf(source, bins: int = 256) -> Pdf1D:
    """Pooled-pixel density histogram of an ensemble (integrates to 1)."""
    images = list(_iter_images(source))
    if not images:
        raise NumericalError("empty ensemble")
    pooled = np.concatenate([_as_data(im).ravel() for im in images])
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi == lo:
        hi = lo + 1.0  # single-valued data: one occupied bin
    densities, edges = np.histogram(pooled, bins=bins, range=(lo, hi),
                                    density=True)
    return Pdf1D(edges, densities)


@lru_cache(maxsize=8)
def _papoulis_1d(n: int) -> np.ndarray:
    t = np.linspace(-1.0, 1.0, n)
    return (1.0 / np.pi) * np.abs(np.sin(np.pi * t)) \
        + (1.0 - np.abs(t)) * np.cos(np.pi * t)


def papoulis_window(n: int) -> np.ndarray:
    """Separable 2D taper w(u) * w(v) over [-1, 1] x [-1, 1].

    w(t) = |sin(pi t)| / pi + (1 - |t|) cos(pi t); unity at the center,
    zero on the border. Used to suppress boundary artifacts in
    autocorrelation estimation.
    """
    if n < 2:
        raise ConfigError(f"window side must be >= 2, got {n}")
    w = _papoulis_1d(n)
    return w[:, None] * w[None, :]


def windowed_autocorrelation(img) -> np.ndarray:
    """Circular autocorrelation of the mean-subtracted, tapered image.

    The window-weighted mean is removed, the Papoulis taper applied, and the
    correlation computed by FFT; lag (0, 0) sits at index (0, 0).
    """
    data = _as_data(img)
    if data.shape[0] != data.shape[1]:
        raise ConfigError("autocorrelation expects square images")
    w = papoulis_window(data.shape[0])
    mean = float((data * w).sum() / w.sum())
    tapered = (data - mean) * w
    spectrum = np.fft.fft2(tapered)
    return np.fft.ifft2(np.abs(spectrum) ** 2).real


@lru_cache(maxsize=8)
def _window_acf(n: int) -> np.ndarray:
    w = papoulis_window(n)
    acf = np.fft.ifft2(np.abs(np.fft.fft2(w)) ** 2).real
    # clamp tiny denominators so the taper correction cannot blow up
    return np.maximum(acf, 1e-3 * acf[0, 0])


@lru_cache(maxsize=8)
def _radius_bins(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    lag = ((np.arange(n) + n // 2) % n) - n // 2
    radius = np.hypot(lag[:, None], lag[None, :])
    rbin = np.round(radius).astype(np.intp).ravel()
    r_max = n // 2
    keep = rbin <= r_max
    return rbin, keep, r_max


def autocorrelation_2d(source) -> np.ndarray:
    """Ensemble-mean taper-corrected autocorrelation map, peak-normalized."""
    count = 0
    total = None
    n = None
    for im in _iter_images(source):
        acf = windowed_autocorrelation(im)
        total = acf if total is None else total + acf
        n = acf.shape[0]
        count += 1
    if count == 0:
        raise NumericalError("empty ensemble")
    corrected = (total / count) / _window_acf(n)
    peak = corrected[0, 0]
    if peak <= 0.0:
        raise NumericalError("zero-variance ensemble: no autocorrelation peak")
    return corrected / peak


def autocorrelation_radial(source) -> RadialProfile:
    """Radial profile of the ensemble autocorrelation (value 1 at r = 0)."""
    corrected = autocorrelation_2d(source)
    n = corrected.shape[0]
    rbin, keep, r_max = _radius_bins(n)
    flat = corrected.ravel()[keep]
    bins = rbin[keep]
    sums = np.bincount(bins, weights=flat, minlength=r_max + 1)
    counts = np.bincount(bins, minlength=r_max + 1)
    return RadialProfile(np.arange(r_max + 1, dtype=np.float64), sums / counts)


def correlation_length(profile: RadialProfile, level: float = 0.5) -> float:
    """First radius where the profile crosses `level`, linearly interpolated."""
    values = profile.values
    below = np.flatnonzero(values < level)
    if below.size == 0:
        return float(profile.radii[-1])
    k = below[0]
    if k == 0:
        return 0.0
    r0, r1 = profile.radii[k - 1], profile.radii[k]
    v0, v1 = values[k - 1], values[k]
    return float(r0 + (v0 - level) / (v0 - v1) * (r1 - r0))


@dataclass(frozen=True)
class GaussianFit:
    mu: float
    sigma: float
    mse: float


def gaussian_fit(samples) -> GaussianFit:
    """Moment fit of a Gaussian plus the histogram-vs-density fit error.

    mse is the mean squared difference between the sample density histogram
    (shared bin rule of the divergence module) and the fitted Gaussian
    density at the bin centers.
    """
    from .divergence import histogram_bin_count
    values = np.asarray(samples, dtype=np.float64).ravel()
    if values.size < 2:
        raise NumericalError("need at least 2 samples to fit")
    mu = float(values.mean())
    sigma = float(values.std(ddof=1))
    if sigma == 0.0:
        raise NumericalError("zero-variance samples")
    bins = histogram_bin_count(values)
    densities, edges = np.histogram(values, bins=bins, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    pdf = np.exp(-0.5 * ((centers - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    mse = float(np.mean((densities - pdf) ** 2))
    return GaussianFit(mu, sigma, mse)


def fg_ratio(img, fat_value: float, gland_value: float,
             tolerance: float) -> FgRatio:
    """Fractions of pixels near the fat / glandular values and their log ratio.

    Purely histogram-based: a pixel counts as fat (glandular) when it lies
    within +/- tolerance of the respective value. The two acceptance windows
    must not overlap. A missing class yields log_ratio None.
    """
    if not tolerance > 0:
        raise ConfigError(f"tolerance must be positive, got {tolerance}")
    if abs(fat_value - gland_value) <= 2.0 * tolerance:
        raise ConfigError("fat and gland windows overlap: classes not separable")
    data = _as_data(img)
    f = float(np.mean(np.abs(data - fat_value) <= tolerance))
    g = float(np.mean(np.abs(data - gland_value) <= tolerance))
    if g == 0.0 or f == 0.0:
        return FgRatio(f, g, None)
    return FgRatio(f, g, math.log(f / g))


def decorrelated_subsample(source, stride: int | None = None,
                           max_per_image: int = 25) -> np.ndarray:
    """Pool near-independent pixels from an ensemble.

    Pixels are taken on a grid with spacing of 4x the measured correlation
    length (unless an explicit stride is given), at most `max_per_image` per
    image. The cap bounds the pooled sample so that goodness-of-fit tests
    check the distribution law rather than the small, known finite-sample
    deviations a consistent test would always detect at unbounded n.
    """
    images = list(_iter_images(source))
    if not images:
        raise NumericalError("empty ensemble")
    if stride is None:
        profile = autocorrelation_radial(images)
        stride = max(1, math.ceil(4.0 * correlation_length(profile)))
    side = max(1, math.isqrt(max_per_image))
    pooled = []
    for im in images:
        sub = _as_data(im)[::stride, ::stride]
        pooled.append(sub[:side, :side].ravel())
    return np.concatenate(pooled)


def ks_statistic_fitted(values, law: str) -> tuple[float, float]:
    """KS distance of samples to a moment-fitted law and its 1% critical value.

    Supported laws: "rayleigh" (scale from the second moment) and
    "exponential" (scale = mean). The critical value is the large-n 1% point
    of the Kolmogorov distribution, 1.628 / sqrt(n).
    """
    from scipy import stats as sps
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < 2:
        raise NumericalError("need at least 2 samples")
    if law == "rayleigh":
        scale = math.sqrt(float(np.mean(values**2)) / 2.0)
        stat = sps.kstest(values, "rayleigh", args=(0.0, scale)).statistic
    elif law == "exponential":
        stat = sps.kstest(values, "expon", args=(0.0, float(values.mean()))).statistic
    else:
        raise ConfigError(f"unknown law {law!r}")
    return float(stat), 1.628 / math.sqrt(values.size)


def pdf_peaks(samples, bins: int = 64, prominence: float = 0.1,
              smooth: int = 3) -> np.ndarray:
    """Locations of the modes of a sample PDF.

    Histogram the samples, smooth with a short moving average, and return the
    bin centers of peaks whose prominence exceeds `prominence` times the
    maximum density.
    """
    values = np.asarray(samples, dtype=np.float64).ravel()
    densities, edges = np.histogram(values, bins=bins, density=True)
    if smooth > 1:
        kernel = np.ones(smooth) / smooth
        densities = np.convolve(densities, kernel, mode="same")
    centers = 0.5 * (edges[:-1] + edges[1:])
    peaks, _ = find_peaks(densities, prominence=prominence * densities.max())
    return centers[peaks]
