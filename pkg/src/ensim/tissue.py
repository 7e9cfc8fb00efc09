"""Synthetic multi-tissue test images with prescribed fat/glandular content.

These phantoms exist to exercise the composition-ratio estimator: each image
is a shuffled pixel field in which known fractions carry the fat and
glandular attenuation values (plus sub-tolerance value noise) and the rest a
background value. Classes prescribe different fat-to-glandular log-ratios.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import ConfigError, Ensemble, Image, RngStream, config_digest, parallel_map


@dataclass(frozen=True)
class TissueClass:
    """One composition class: target pixel fractions for fat and gland."""

    name: str
    fat_fraction: float
    gland_fraction: float
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.fat_fraction and 0.0 < self.gland_fraction):
            raise ConfigError("tissue fractions must be positive")
        if self.fat_fraction + self.gland_fraction > 1.0:
            raise ConfigError(
                f"class {self.name!r}: fat + gland fractions exceed 1"
            )
        if not self.weight > 0:
            raise ConfigError("class weight must be positive")

    @property
    def log_ratio(self) -> float:
        return math.log(self.fat_fraction / self.gland_fraction)


@dataclass(frozen=True)
class TissueConfig:
    """Phantom geometry, attenuation values, and the class mixture.

    `value_noise` adds uniform noise of that half-width to every tissue
    pixel (keep it below the segmentation tolerance); `fraction_jitter` is
    the log-normal sigma applied per image to each class fraction.
    """

    image_size: int
    classes: tuple[TissueClass, ...]
    fat_value: float
    gland_value: float
    background_value: float = 0.0
    value_noise: float = 0.0
    fraction_jitter: float = 0.0

    def __post_init__(self) -> None:
        if self.image_size < 2:
            raise ConfigError(f"image_size must be >= 2, got {self.image_size}")
        if not self.classes:
            raise ConfigError("at least one tissue class is required")
        object.__setattr__(self, "classes", tuple(self.classes))
        if self.fat_value == self.gland_value:
            raise ConfigError("fat and gland values must differ")

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "fat_value": self.fat_value,
            "gland_value": self.gland_value,
            "background_value": self.background_value,
            "value_noise": self.value_noise,
            "fraction_jitter": self.fraction_jitter,
            "classes": [asdict(c) for c in self.classes],
        }


def _class_counts(weights: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder allocation of n images to classes."""
    shares = weights / weights.sum() * n
    counts = np.floor(shares).astype(int)
    remainder = shares - counts
    for idx in np.argsort(remainder)[::-1][: n - counts.sum()]:
        counts[idx] += 1
    return counts


def generate_tissue_image(cfg: TissueConfig, cls: TissueClass,
                          rng: RngStream) -> Image:
    """One phantom of the given class; deterministic given (cfg, cls, rng)."""
    gen = rng.generator()
    n_px = cfg.image_size**2
    fat_frac, gland_frac = cls.fat_fraction, cls.gland_fraction
    if cfg.fraction_jitter > 0:
        fat_frac *= math.exp(gen.normal(0.0, cfg.fraction_jitter))
        gland_frac *= math.exp(gen.normal(0.0, cfg.fraction_jitter))
        total = fat_frac + gland_frac
        if total > 1.0:
            fat_frac, gland_frac = fat_frac / total, gland_frac / total
    n_fat = int(round(fat_frac * n_px))
    n_gland = int(round(gland_frac * n_px))

    values = np.full(n_px, cfg.background_value, dtype=np.float64)
    values[:n_fat] = cfg.fat_value
    values[n_fat:n_fat + n_gland] = cfg.gland_value
    if cfg.value_noise > 0:
        noise = gen.uniform(-cfg.value_noise, cfg.value_noise,
                            size=n_fat + n_gland)
        values[:n_fat + n_gland] += noise
    gen.shuffle(values)
    return Image(values.reshape(cfg.image_size, cfg.image_size))


def generate_tissue_ensemble(cfg: TissueConfig, n: int, seed: int,
                             threads: int = 1) -> Ensemble:
    """n phantoms with exact per-class counts from the class weights."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    weights = np.array([c.weight for c in cfg.classes], dtype=np.float64)
    counts = _class_counts(weights, n)
    class_of = np.repeat(np.arange(len(cfg.classes)), counts)
    base = RngStream(seed)
    base.derive(0xA55).generator().shuffle(class_of)

    def make(i: int) -> Image:
        return generate_tissue_image(cfg, cfg.classes[class_of[i]],
                                     base.derive(i))

    images = parallel_map(make, range(n), threads)
    labels = [cfg.classes[k].name for k in class_of]
    from . import __version__
    config = cfg.to_dict()
    manifest = {
        "generator": "tissue",
        "version": __version__,
        "config": config,
        "config_sha256": config_digest(config),
        "master_seed": seed,
        "count": n,
        "class_counts": {c.name: int(k) for c, k in zip(cfg.classes, counts)},
    }
    return Ensemble(images, labels, manifest)
