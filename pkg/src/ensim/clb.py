"""Clustered lumpy background generator and the degraded-class transform.

Images are sums of smooth blob profiles placed in clusters: cluster centers
are uniform over the image, cluster sizes and blob counts are Poisson, blob
offsets are isotropic Gaussian around the cluster center. Placement wraps
around the image borders (toroidal), which keeps the ensemble statistics
stationary. A "double-layered" configuration sums two independent layers,
typically a coarse and a fine one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import (ConfigError, Ensemble, Image, RngStream, config_digest,
                   parallel_map)

# blobs are truncated where the profile falls below this fraction of its peak
_REL_SUPPORT = 1e-6

ISOTROPIC = "isotropic"
ORIENTED = "oriented"


@dataclass(frozen=True)
class ClbLayer:
    """One layer of the clustered lumpy model.

    Parameters
    ----------
    mean_clusters : float
        Poisson mean of the cluster count per image.
    mean_blobs : float
        Poisson mean of the blob count per cluster.
    cluster_spread : float
        Std (pixels) of the isotropic Gaussian blob placement around the
        cluster center.
    blob_scale_lx, blob_scale_ly : float
        Characteristic blob radii (pixels) along the blob's own axes.
    alpha, beta : float
        Shape parameters of the radial profile exp(-alpha * r**beta).
    amplitude : float
        Peak value of a single blob.
    orientation : str
        "isotropic": every blob gets its own uniform angle.
        "oriented": all blobs of a cluster share the cluster's uniform angle.
    """

    mean_clusters: float
    mean_blobs: float
    cluster_spread: float
    blob_scale_lx: float
    blob_scale_ly: float
    alpha: float
    beta: float
    amplitude: float = 1.0
    orientation: str = ISOTROPIC

    def __post_init__(self) -> None:
        for name in ("mean_clusters", "mean_blobs", "cluster_spread",
                     "blob_scale_lx", "blob_scale_ly", "alpha", "beta",
                     "amplitude"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.orientation not in (ISOTROPIC, ORIENTED):
            raise ConfigError(f"unknown orientation {self.orientation!r}")

    def support_radius(self) -> float:
        """Pixel radius beyond which the profile is below _REL_SUPPORT."""
        r_scaled = (math.log(1.0 / _REL_SUPPORT) / self.alpha) ** (1.0 / self.beta)
        return r_scaled * max(self.blob_scale_lx, self.blob_scale_ly)


@dataclass(frozen=True)
class ClbConfig:
    image_size: int
    layers: tuple[ClbLayer, ...]
    dc_offset: float = 0.0

    def __post_init__(self) -> None:
        if self.image_size < 2:
            raise ConfigError(f"image_size must be >= 2, got {self.image_size}")
        if len(self.layers) not in (1, 2):
            raise ConfigError(f"layers must be 1 or 2, got {len(self.layers)}")
        object.__setattr__(self, "layers", tuple(self.layers))

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "dc_offset": self.dc_offset,
            "layers": [asdict(layer) for layer in self.layers],
        }


@dataclass(frozen=True)
class DegradeConfig:
    """Gaussian blur followed by an ideal low-pass filter."""

    blur_sigma: float
    lpf_cutoff_fraction: float = 0.5

    def __post_init__(self) -> None:
        if not self.blur_sigma > 0:
            raise ConfigError(f"blur_sigma must be positive, got {self.blur_sigma}")
        if not 0.0 < self.lpf_cutoff_fraction <= 1.0:
            raise ConfigError(
                f"lpf_cutoff_fraction must be in (0, 1], got "
                f"{self.lpf_cutoff_fraction}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def _pow_half_beta(r_squared: np.ndarray, beta: float) -> np.ndarray:
    """r**beta from r**2, with cheap paths for the common beta values."""
    if beta == 2.0:
        return r_squared
    if beta == 1.0:
        return np.sqrt(r_squared)
    if beta == 0.5:
        return np.sqrt(np.sqrt(r_squared))
    if beta == 1.5:
        r = np.sqrt(r_squared)
        r *= np.sqrt(r)
        return r
    return r_squared ** (0.5 * beta)


def blob_profile(dx, dy, layer: ClbLayer, angle: float = 0.0):
    """Blob value at displacement (dx, dy) from its center.

    The displacement is rotated by -angle into the blob frame, scaled by the
    per-axis radii, and fed to amplitude * exp(-alpha * r**beta).
    Accepts scalars or arrays.
    """
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    c, s = math.cos(angle), math.sin(angle)
    u = (c * dx + s * dy) / layer.blob_scale_lx
    v = (-s * dx + c * dy) / layer.blob_scale_ly
    arg = _pow_half_beta(u * u + v * v, layer.beta)
    arg *= -layer.alpha
    return layer.amplitude * np.exp(arg)


def draw_layer_blobs(layer: ClbLayer, size: int,
                     gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample all blob centers and angles of one layer realization.

    Returns (centers, angles) with centers of shape (n_blobs, 2) in pixel
    coordinates (row, col); centers may lie outside [0, size) and are wrapped
    at render time.
    """
    centers = []
    angles = []
    n_clusters = int(gen.poisson(layer.mean_clusters))
    for _ in range(n_clusters):
        c_pos = gen.uniform(0.0, size, size=2)
        n_blobs = int(gen.poisson(layer.mean_blobs))
        if layer.orientation == ORIENTED:
            cluster_angle = float(gen.uniform(0.0, 2.0 * np.pi))
            blob_angles = np.full(n_blobs, cluster_angle)
        else:
            blob_angles = gen.uniform(0.0, 2.0 * np.pi, size=n_blobs)
        offsets = gen.normal(0.0, layer.cluster_spread, size=(n_blobs, 2))
        centers.append(c_pos[None, :] + offsets)
        angles.append(blob_angles)
    if not centers:
        return np.zeros((0, 2)), np.zeros(0)
    return np.concatenate(centers), np.concatenate(angles)


def _render_blob(img: np.ndarray, center: np.ndarray, angle: float,
                 layer: ClbLayer, radius: float) -> None:
    n = img.shape[0]
    cx, cy = center
    if 2.0 * radius + 1.0 >= n:
        # support covers the image: evaluate everywhere, one wrap only
        rows = np.arange(n, dtype=np.float64)
        dx = ((rows - cx + n / 2.0) % n) - n / 2.0
        dy = ((rows - cy + n / 2.0) % n) - n / 2.0
        img += blob_profile(dx[:, None], dy[None, :], layer, angle)
        return
    r0 = math.floor(cx - radius)
    r1 = math.ceil(cx + radius)
    c0 = math.floor(cy - radius)
    c1 = math.ceil(cy + radius)
    rows = np.arange(r0, r1 + 1)
    cols = np.arange(c0, c1 + 1)
    patch = blob_profile((rows - cx)[:, None], (cols - cy)[None, :],
                         layer, angle)
    if 0 <= r0 and r1 < n and 0 <= c0 and c1 < n:
        img[r0:r1 + 1, c0:c1 + 1] += patch
    else:
        img[np.ix_(rows % n, cols % n)] += patch


def generate_clb(cfg: ClbConfig, rng: RngStream) -> Image:
    """One clustered-lumpy image; deterministic given (cfg, rng)."""
    n = cfg.image_size
    img = np.full((n, n), cfg.dc_offset, dtype=np.float64)
    gen = rng.generator()
    for layer in cfg.layers:
        centers, angles = draw_layer_blobs(layer, n, gen)
        radius = layer.support_radius()
        for center, angle in zip(centers, angles):
            _render_blob(img, center, angle, layer, radius)
    return Image(img)


def degrade(image: Image, d: DegradeConfig) -> Image:
    """Gaussian blur then ideal low-pass, both applied in the Fourier domain.

    The blur multiplies the spectrum by the Gaussian transfer function of a
    spatial-domain std of `blur_sigma` pixels; the low-pass zeroes every
    coefficient with max(|fx|, |fy|) above `lpf_cutoff_fraction` times the
    Nyquist frequency.
    """
    data = image.data
    fx = np.fft.fftfreq(data.shape[0])[:, None]
    fy = np.fft.fftfreq(data.shape[1])[None, :]
    transfer = np.exp(-2.0 * np.pi**2 * d.blur_sigma**2 * (fx**2 + fy**2))
    passband = np.maximum(np.abs(fx), np.abs(fy)) <= d.lpf_cutoff_fraction * 0.5
    spectrum = np.fft.fft2(data) * transfer * passband
    return Image(np.fft.ifft2(spectrum).real, image.pixel_pitch)


def generate_ensemble(cfg: ClbConfig, n: int, seed: int, threads: int = 1,
                      label: str = "clb") -> Ensemble:
    """n independent CLB images from per-image streams of one master seed."""
    base = RngStream(seed)
    images = parallel_map(
        lambda i: generate_clb(cfg, base.derive(i)), range(n), threads
    )
    from . import __version__
    config = cfg.to_dict()
    manifest = {
        "generator": "clb",
        "version": __version__,
        "config": config,
        "config_sha256": config_digest(config),
        "master_seed": seed,
        "count": n,
    }
    return Ensemble(images, [label] * n, manifest)


def generate_mixed(cfg: ClbConfig, d: DegradeConfig, degraded_fraction: float,
                   n: int, seed: int, threads: int = 1) -> Ensemble:
    """Mixed regular/degraded ensemble with an exact degraded-class count.

    Exactly round(n * degraded_fraction) images receive the degrade()
    transform and the label "degraded"; class positions are randomly
    shuffled. Deterministic given the seed.
    """
    if not 0.0 <= degraded_fraction <= 1.0:
        raise ConfigError(
            f"degraded_fraction must be in [0, 1], got {degraded_fraction}"
        )
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    n_degraded = int(round(n * degraded_fraction))
    base = RngStream(seed)
    order = base.derive(0xA55).generator().permutation(n)
    degraded = np.zeros(n, dtype=bool)
    degraded[order[:n_degraded]] = True

    def make(i: int) -> Image:
        img = generate_clb(cfg, base.derive(i))
        return degrade(img, d) if degraded[i] else img

    images = parallel_map(make, range(n), threads)
    labels = ["degraded" if flag else "regular" for flag in degraded]
    config = {
        "clb": cfg.to_dict(),
        "degrade": d.to_dict(),
        "degraded_fraction": degraded_fraction,
    }
    from . import __version__
    manifest = {
        "generator": "clb-mixed",
        "version": __version__,
        "config": config,
        "config_sha256": config_digest(config),
        "master_seed": seed,
        "count": n,
        "class_counts": {"regular": int(n - n_degraded),
                         "degraded": int(n_degraded)},
    }
    return Ensemble(images, labels, manifest)
