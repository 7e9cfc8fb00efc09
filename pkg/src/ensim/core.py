"""Image/ensemble data model, seeded random streams, quantization, splitting."""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Callable, Iterable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class EnsimError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(EnsimError):
    """Invalid configuration, preset, or parameter value."""


class DataError(EnsimError):
    """Dataset missing, inconsistent, or structurally malformed."""


class NumericalError(EnsimError):
    """Degenerate input or failed numerical computation."""


def _mix64(x: int) -> int:
    # splitmix64 finalizer; stable across platforms, unlike built-in hash()
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (master_seed, stream_index).

    Equal keys replay the identical sequence; distinct stream indices give
    statistically independent sequences (Philox keyed streams), so per-image
    streams stay reproducible under any degree of parallelism.
    """

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.master_seed & _MASK64, self.stream_index & _MASK64],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, *indices: int) -> "RngStream":
        """Child stream for a sub-task (image index, shuffle, ...)."""
        x = self.stream_index & _MASK64
        for idx in indices:
            x = _mix64((x * _GOLDEN + _mix64(idx + 1)) & _MASK64)
        return RngStream(self.master_seed, x)


@dataclass(frozen=True, eq=False)
class Image:
    """A 2D scalar field with optional physical pixel pitch (meters/pixel)."""

    data: np.ndarray
    pixel_pitch: float | None = None

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise DataError(f"image data must be 2D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError("image contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(eq=False)
class Ensemble:
    """An ordered image collection with class labels and a provenance manifest."""

    images: list[Image]
    labels: list[str]
    manifest: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.images) != len(self.labels):
            raise DataError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        dims = {im.data.shape for im in self.images}
        if len(dims) > 1:
            raise DataError(f"images do not share dimensions: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self) -> Iterator[Image]:
        return iter(self.images)

    @property
    def dims(self) -> tuple[int, int]:
        if not self.images:
            raise DataError("empty ensemble has no dimensions")
        return self.images[0].data.shape

    def pooled_pixels(self) -> np.ndarray:
        return np.concatenate([im.data.ravel() for im in self.images])

    def subset(self, indices: Sequence[int]) -> "Ensemble":
        return Ensemble(
            [self.images[i] for i in indices],
            [self.labels[i] for i in indices],
            dict(self.manifest),
        )


def config_digest(config: Any) -> str:
    """Stable sha256 of a JSON-serializable configuration echo."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def pooled_quantile(ensemble: Ensemble, top_percentile: float) -> float:
    """Nearest-rank (1 - top_percentile) quantile of all pooled pixel values."""
    pooled = np.sort(ensemble.pooled_pixels())
    rank = max(1, math.ceil((1.0 - top_percentile) * pooled.size))
    return float(pooled[rank - 1])


def quantize_ensemble(ensemble: Ensemble, top_percentile: float = 0.01) -> Ensemble:
    """Rescale an ensemble to 8-bit gray levels.

    Full scale (255) maps to the pooled nearest-rank quantile that leaves
    `top_percentile` of all pixel values above it; values are clipped to
    [0, T] and rounded. Output pixels are in {0, ..., 255}, stored as reals.
    """
    if not ensemble.images:
        raise DataError("cannot quantize an empty ensemble")
    if not 0.0 < top_percentile < 1.0:
        raise ConfigError(f"top_percentile must be in (0, 1), got {top_percentile}")
    threshold = pooled_quantile(ensemble, top_percentile)
    if threshold <= 0.0:
        raise NumericalError("degenerate scale: pooled quantile is not positive")
    images = [
        Image(np.round(255.0 * np.clip(im.data, 0.0, threshold) / threshold),
              im.pixel_pitch)
        for im in ensemble.images
    ]
    manifest = dict(ensemble.manifest)
    manifest["quantization"] = {
        "top_percentile": top_percentile,
        "threshold": threshold,
    }
    return Ensemble(images, list(ensemble.labels), manifest)


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint random partition of range(n) into two equal (+/-1) halves."""
    if n < 2:
        raise DataError(f"need at least 2 items to split, got {n}")
    perm = RngStream(seed).derive(0x5B17).generator().permutation(n)
    half = n // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def split_halves(ensemble: Ensemble, seed: int) -> tuple[Ensemble, Ensemble]:
    """Deterministic random split of an ensemble into two disjoint halves."""
    idx_a, idx_b = split_indices(len(ensemble), seed)
    return ensemble.subset(idx_a), ensemble.subset(idx_b)


def parallel_map(fn: Callable, items: Iterable, threads: int = 1) -> list:
    """Ordered map over items; the result is independent of thread count."""
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
