"""B-mode ultrasound speckle simulator.

A random field of unit-amplitude scatterers with i.i.d. uniform phases is
deposited on the pixel grid and circularly convolved with a complex 2D
Gaussian point-spread function whose widths follow from the acoustic
parameters (pulse-echo axial/lateral resolution). The output image is the
envelope (magnitude) of the received complex field.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .core import (ConfigError, Ensemble, Image, NumericalError, RngStream,
                   config_digest, parallel_map)

_FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class UssConfig:
    """Acoustic and sampling parameters of the speckle simulator.

    Axes: image rows are the axial (propagation) direction, columns lateral.

    Parameters
    ----------
    image_size : int
        Side length in pixels (square field).
    pixel_pitch : float
        Pixel size in meters.
    wave_velocity : float
        Speed of sound in m/s.
    carrier_frequency : float
        Transducer carrier in Hz.
    cycles_in_fwhm : float
        Number of carrier cycles within the pulse FWHM (sets axial resolution).
    f_number_lateral, f_number_elevational : float
        Focal distance over aperture in the lateral / slice directions.
    snd : float
        Scatterer number density in scatterers per mm^3.
    """

    image_size: int = 256
    pixel_pitch: float = 100e-6
    wave_velocity: float = 1556.0
    carrier_frequency: float = 3.5e6
    cycles_in_fwhm: float = 2.0
    f_number_lateral: float = 2.0
    f_number_elevational: float = 3.0
    snd: float = 30.0

    def __post_init__(self) -> None:
        if self.image_size < 2:
            raise ConfigError(f"image_size must be >= 2, got {self.image_size}")
        for name in ("pixel_pitch", "wave_velocity", "carrier_frequency",
                     "cycles_in_fwhm", "f_number_lateral",
                     "f_number_elevational", "snd"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ResolutionCell:
    """Pulse-echo resolution volume and the expected scatterer count in it."""

    ar: float            # axial resolution, meters
    lr: float            # lateral resolution, meters
    elevational: float   # slice thickness, meters
    cell_volume: float   # mm^3
    expected_n: float    # scatterers per resolution cell


def resolution_cell(cfg: UssConfig) -> ResolutionCell:
    """Resolution cell from the standard pulse-echo expressions.

    wavelength = v / f_c, axial = N_c * wavelength / 2, lateral (and
    elevational) = wavelength * f-number.
    """
    wavelength = cfg.wave_velocity / cfg.carrier_frequency
    ar = cfg.cycles_in_fwhm * wavelength / 2.0
    lr = wavelength * cfg.f_number_lateral
    elevational = wavelength * cfg.f_number_elevational
    cell_volume = ar * lr * elevational * 1e9  # m^3 -> mm^3
    return ResolutionCell(ar, lr, elevational, cell_volume,
                          cfg.snd * cell_volume)


def _wrapped_coords(n: int) -> np.ndarray:
    # lag coordinates centered on 0 with wrap-around, matching circular FFTs
    return ((np.arange(n) + n // 2) % n) - n // 2


@lru_cache(maxsize=16)
def _psf_spectrum(cfg: UssConfig) -> np.ndarray:
    """FFT of the complex PSF: Gaussian envelope, axial carrier modulation."""
    n = cfg.image_size
    cell = resolution_cell(cfg)
    sigma_x = cell.ar / _FWHM_TO_SIGMA / cfg.pixel_pitch   # px, axial (rows)
    sigma_y = cell.lr / _FWHM_TO_SIGMA / cfg.pixel_pitch   # px, lateral (cols)
    wavelength_px = (cfg.wave_velocity / cfg.carrier_frequency) / cfg.pixel_pitch
    x = _wrapped_coords(n)[:, None].astype(np.float64)
    y = _wrapped_coords(n)[None, :].astype(np.float64)
    envelope = np.exp(-(x**2 / (2.0 * sigma_x**2) + y**2 / (2.0 * sigma_y**2)))
    psf = envelope * np.exp(2j * np.pi * x / wavelength_px)
    return np.fft.fft2(psf)


def psf_envelope(cfg: UssConfig) -> np.ndarray:
    """Magnitude of the PSF, centered at pixel (0, 0) with wrap-around."""
    n = cfg.image_size
    dummy = np.zeros((n, n), dtype=np.complex128)
    dummy[0, 0] = 1.0
    return np.abs(np.fft.ifft2(np.fft.fft2(dummy) * _psf_spectrum(cfg)))


def expected_scatterer_count(cfg: UssConfig) -> float:
    """Mean scatterer count over the field: areal density x field area.

    The volumetric density is reduced to an areal one by the elevational
    resolution, which plays the role of the slice thickness.
    """
    cell = resolution_cell(cfg)
    areal_density = cfg.snd * (cell.elevational * 1e3)          # mm^-2
    side_mm = cfg.image_size * cfg.pixel_pitch * 1e3
    return areal_density * side_mm**2


def draw_scatterers(cfg: UssConfig,
                    rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Sample scatterer positions (pixels) and phases for one realization."""
    expected = expected_scatterer_count(cfg)
    if expected <= 0:
        raise NumericalError("degenerate config: expected scatterer count is 0")
    gen = rng.generator()
    count = int(gen.poisson(expected))
    positions = gen.uniform(0.0, cfg.image_size, size=(count, 2))
    phases = gen.uniform(0.0, 2.0 * np.pi, size=count)
    return positions, phases


def envelope_from_scatterers(cfg: UssConfig, positions: np.ndarray,
                             phases: np.ndarray) -> Image:
    """Deposit unit phasors on the grid, convolve with the PSF, take |E|."""
    n = cfg.image_size
    field = np.zeros((n, n), dtype=np.complex128)
    if len(positions):
        ix = np.floor(positions[:, 0]).astype(np.intp) % n
        iy = np.floor(positions[:, 1]).astype(np.intp) % n
        np.add.at(field, (ix, iy), np.exp(1j * phases))
    received = np.fft.ifft2(np.fft.fft2(field) * _psf_spectrum(cfg))
    return Image(np.abs(received), cfg.pixel_pitch)


def generate_speckle(cfg: UssConfig, rng: RngStream) -> Image:
    """One envelope image; a pure function of (cfg, rng)."""
    positions, phases = draw_scatterers(cfg, rng)
    return envelope_from_scatterers(cfg, positions, phases)


def _manifest(generator: str, config: dict, seed: int, n: int) -> dict:
    from . import __version__
    return {
        "generator": generator,
        "version": __version__,
        "config": config,
        "config_sha256": config_digest(config),
        "master_seed": seed,
        "count": n,
    }


def generate_ensemble(cfg: UssConfig, n: int, seed: int, threads: int = 1,
                      label: str = "uss") -> Ensemble:
    """n independent speckle images from per-image streams of one master seed."""
    base = RngStream(seed)
    images = parallel_map(
        lambda i: generate_speckle(cfg, base.derive(i)), range(n), threads
    )
    manifest = _manifest("uss", cfg.to_dict(), seed, n)
    return Ensemble(images, [label] * n, manifest)


def generate_mixed_uss(cfg_a: UssConfig, cfg_b: UssConfig, fraction_b: float,
                       n: int, seed: int, threads: int = 1,
                       labels: tuple[str, str] = ("a", "b")) -> Ensemble:
    """Two-class ensemble with exactly round(n * fraction_b) class-B images."""
    if (cfg_a.image_size, cfg_a.pixel_pitch) != (cfg_b.image_size,
                                                 cfg_b.pixel_pitch):
        raise ConfigError("geometry mismatch between the two speckle configs")
    if not 0.0 <= fraction_b <= 1.0:
        raise ConfigError(f"fraction_b must be in [0, 1], got {fraction_b}")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")

    n_b = int(round(n * fraction_b))
    base = RngStream(seed)
    order = base.derive(0xA55).generator().permutation(n)
    is_b = np.zeros(n, dtype=bool)
    is_b[order[:n_b]] = True

    def make(i: int) -> Image:
        return generate_speckle(cfg_b if is_b[i] else cfg_a, base.derive(i))

    images = parallel_map(make, range(n), threads)
    label_list = [labels[1] if flag else labels[0] for flag in is_b]
    config = {
        "class_a": cfg_a.to_dict(),
        "class_b": cfg_b.to_dict(),
        "fraction_b": fraction_b,
    }
    manifest = _manifest("uss-mixed", config, seed, n)
    manifest["class_counts"] = {labels[0]: int(n - n_b), labels[1]: int(n_b)}
    return Ensemble(images, label_list, manifest)
