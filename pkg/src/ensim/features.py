"""Per-image texture features: first-order moments, GLCM, run-length, NGTDM.

Seventeen features in four families:

* first-order: mean, std, skewness, kurtosis of the pixel values;
* gray-level co-occurrence matrix: energy, entropy, maximum, contrast,
  homogeneity;
* gray-level run-length (primitives) matrix: short/long primitive emphasis,
  gray-level uniformity, primitive-length uniformity;
* neighborhood gray-tone difference matrix: coarseness, contrast,
  complexity, strength.

Matrix features quantize each image to equal-width bins over its own
[min, max] range, so they are invariant under positive affine gray maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy.signal import convolve2d

from .core import ConfigError, Image, NumericalError

_EPS = 1e-9


@dataclass(frozen=True)
class FeatureParams:
    """Quantization and geometry settings shared by the matrix features."""

    gray_levels: int = 16
    glcm_distances: tuple[int, ...] = (1, 2, 4)
    glcm_angles: tuple[int, ...] = (0, 45, 90, 135)
    glrm_directions: tuple[int, ...] = (0, 90)
    ngtdm_d: int = 1
    ngtdm_norm: str = "interior"   # or "total": NGTDM occupancy denominator

    def __post_init__(self) -> None:
        if self.gray_levels < 2:
            raise ConfigError(f"gray_levels must be >= 2, got {self.gray_levels}")
        for name in ("glcm_distances", "glcm_angles", "glrm_directions"):
            seq = tuple(getattr(self, name))
            if not seq:
                raise ConfigError(f"{name} must be non-empty")
            object.__setattr__(self, name, seq)
        if any(d < 1 for d in self.glcm_distances):
            raise ConfigError("glcm_distances must be positive")
        if self.ngtdm_d < 1:
            raise ConfigError(f"ngtdm_d must be >= 1, got {self.ngtdm_d}")
        bad = set(self.glcm_angles) - {0, 45, 90, 135}
        if bad:
            raise ConfigError(f"unsupported GLCM angles: {sorted(bad)}")
        bad = set(self.glrm_directions) - {0, 45, 90, 135}
        if bad:
            raise ConfigError(f"unsupported run directions: {sorted(bad)}")
        if self.ngtdm_norm not in ("interior", "total"):
            raise ConfigError(f"unknown ngtdm_norm {self.ngtdm_norm!r}")

    def to_dict(self) -> dict:
        return {
            "gray_levels": self.gray_levels,
            "glcm_distances": list(self.glcm_distances),
            "glcm_angles": list(self.glcm_angles),
            "glrm_directions": list(self.glrm_directions),
            "ngtdm_d": self.ngtdm_d,
            "ngtdm_norm": self.ngtdm_norm,
        }


@dataclass(frozen=True)
class FeatureVector:
    """The 17 per-image texture features; undefined moments are None."""

    mean: float
    std: float
    skewness: Optional[float]
    kurtosis: Optional[float]
    glcm_energy: float
    glcm_entropy: float
    glcm_maximum: float
    glcm_contrast: float
    glcm_homogeneity: float
    glrm_spe: float
    glrm_lpe: float
    glrm_glu: float
    glrm_plu: float
    ngtdm_coarseness: float
    ngtdm_contrast: float
    ngtdm_complexity: float
    ngtdm_strength: float

    def as_array(self) -> np.ndarray:
        """Feature values in declaration order, None encoded as NaN."""
        return np.array(
            [np.nan if v is None else float(v) for v in
             (getattr(self, f.name) for f in fields(self))],
            dtype=np.float64,
        )


FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in fields(FeatureVector))

FEATURE_FAMILIES: dict[str, tuple[str, ...]] = {
    "first_order": ("mean", "std", "skewness", "kurtosis"),
    "glcm": ("glcm_energy", "glcm_entropy", "glcm_maximum",
             "glcm_contrast", "glcm_homogeneity"),
    "glrm": ("glrm_spe", "glrm_lpe", "glrm_glu", "glrm_plu"),
    "ngtdm": ("ngtdm_coarseness", "ngtdm_contrast", "ngtdm_complexity",
              "ngtdm_strength"),
}


def _as_data(img) -> np.ndarray:
    if isinstance(img, Image):
        return img.data
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigError(f"expected a 2D image, got shape {arr.shape}")
    return arr


def quantize_levels(data: np.ndarray, gray_levels: int) -> np.ndarray:
    """Equal-width binning of an image over its own [min, max] range."""
    vmin = data.min()
    vmax = data.max()
    if vmax == vmin:
        return np.zeros(data.shape, dtype=np.intp)
    scaled = (data - vmin) * (gray_levels / (vmax - vmin))
    return np.minimum(np.floor(scaled).astype(np.intp), gray_levels - 1)


def first_order(img) -> tuple[float, float, Optional[float], Optional[float]]:
    """Population mean/std and standardized third/fourth moments.

    Skewness is m3 / m2**1.5 and kurtosis m4 / m2**2 (not excess). On a
    constant image both are undefined and reported as None.
    """
    values = _as_data(img).ravel()
    mean = float(values.mean())
    centered = values - mean
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        return mean, 0.0, None, None
    m3 = float(np.mean(centered**3))
    m4 = float(np.mean(centered**4))
    return mean, math.sqrt(m2), m3 / m2**1.5, m4 / m2**2


# offsets are (row, col) steps; 0 deg is horizontal, rows grow downward
_ANGLE_OFFSETS = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}


def _offset_counts(levels: np.ndarray, n_levels: int,
                   dr: int, dc: int) -> np.ndarray:
    """Symmetric pair counts for one displacement (both directions counted)."""
    h, w = levels.shape
    r0, r1 = max(0, -dr), min(h, h - dr)
    c0, c1 = max(0, -dc), min(w, w - dc)
    a = levels[r0:r1, c0:c1].ravel()
    b = levels[r0 + dr:r1 + dr, c0 + dc:c1 + dc].ravel()
    counts = np.bincount(a * n_levels + b, minlength=n_levels * n_levels)
    counts = counts.reshape(n_levels, n_levels).astype(np.float64)
    return counts + counts.T


def glcm(img, params: FeatureParams) -> np.ndarray:
    """Normalized symmetric co-occurrence matrix, averaged over offsets."""
    levels = quantize_levels(_as_data(img), params.gray_levels)
    g = params.gray_levels
    total = np.zeros((g, g), dtype=np.float64)
    n_offsets = 0
    for dist in params.glcm_distances:
        for angle in params.glcm_angles:
            dr, dc = _ANGLE_OFFSETS[angle]
            total += _offset_counts(levels, g, dr * dist, dc * dist)
            n_offsets += 1
    mean_counts = total / n_offsets
    s = mean_counts.sum()
    if s == 0:
        raise NumericalError("image too small for the requested GLCM offsets")
    return mean_counts / s


def glcm_features(matrix: np.ndarray) -> tuple[float, float, float, float, float]:
    """(energy, entropy, maximum, contrast, homogeneity) of a normalized GLCM."""
    p = np.asarray(matrix, dtype=np.float64)
    i = np.arange(p.shape[0], dtype=np.float64)[:, None]
    j = np.arange(p.shape[1], dtype=np.float64)[None, :]
    nonzero = p[p > 0]
    energy = float(np.sum(p**2))
    entropy = float(-np.sum(nonzero * np.log(nonzero)))
    maximum = float(p.max())
    contrast = float(np.sum(p * (i - j) ** 2))
    homogeneity = float(np.sum(p / (1.0 + np.abs(i - j))))
    return energy, entropy, maximum, contrast, homogeneity


def _runs_of_rows(levels: np.ndarray, n_levels: int,
                  matrix: np.ndarray) -> None:
    """Accumulate maximal-run counts along rows into matrix[level, length-1]."""
    h, w = levels.shape
    change = np.ones((h, w), dtype=bool)
    change[:, 1:] = levels[:, 1:] != levels[:, :-1]
    starts = np.flatnonzero(change.ravel())
    lengths = np.diff(np.append(starts, levels.size))
    values = levels.ravel()[starts]
    np.add.at(matrix, (values, lengths - 1), 1.0)


def _diagonals(arr: np.ndarray):
    h, w = arr.shape
    for off in range(-h + 1, w):
        yield np.diagonal(arr, offset=off)


def glrm(img, params: FeatureParams) -> np.ndarray:
    """Run-length matrix p[level, length-1], counts summed over directions."""
    levels = quantize_levels(_as_data(img), params.gray_levels)
    h, w = levels.shape
    matrix = np.zeros((params.gray_levels, max(h, w)), dtype=np.float64)
    for angle in params.glrm_directions:
        if angle == 0:
            _runs_of_rows(levels, params.gray_levels, matrix)
        elif angle == 90:
            _runs_of_rows(levels.T.copy(), params.gray_levels, matrix)
        else:
            source = levels[:, ::-1] if angle == 45 else levels
            for diag in _diagonals(source):
                _runs_of_rows(diag[None, :].copy(), params.gray_levels, matrix)
    return matrix


def glrm_features(matrix: np.ndarray) -> tuple[float, float, float, float]:
    """(SPE, LPE, GLU, PLU) from an unnormalized run-length matrix."""
    p = np.asarray(matrix, dtype=np.float64)
    total = p.sum()
    if total == 0:
        raise NumericalError("empty run-length matrix")
    r = np.arange(1, p.shape[1] + 1, dtype=np.float64)[None, :]
    spe = float(np.sum(p / r**2) / total)
    lpe = float(np.sum(p * r**2) / total)
    glu = float(np.sum(p.sum(axis=1) ** 2) / total)
    plu = float(np.sum(p.sum(axis=0) ** 2) / total)
    return spe, lpe, glu, plu


def ngtdm(img, params: FeatureParams) -> tuple[float, float, float, float]:
    """(coarseness, contrast, complexity, strength) over interior pixels.

    For each interior pixel the gray-tone difference is |level - A|, A being
    the mean level of the (2d+1)^2 neighborhood without its center; s_i sums
    the differences of all pixels at level i, p_i is the level occupancy.
    Coarseness saturates at 1/eps (eps = 1e-9) on a flat image.
    """
    data = _as_data(img)
    d = params.ngtdm_d
    if min(data.shape) <= 2 * d:
        raise ConfigError(
            f"image of shape {data.shape} too small for neighborhood d={d}"
        )
    levels = quantize_levels(data, params.gray_levels).astype(np.float64)
    size = 2 * d + 1
    kernel = np.ones((size, size), dtype=np.float64)
    kernel[d, d] = 0.0
    neighbor_mean = convolve2d(levels, kernel, mode="valid") / (size**2 - 1)
    interior = levels[d:-d, d:-d]
    diff = np.abs(interior - neighbor_mean).ravel()
    lev = interior.ravel().astype(np.intp)

    g = params.gray_levels
    n_i = np.bincount(lev, minlength=g).astype(np.float64)
    s_i = np.bincount(lev, weights=diff, minlength=g)
    n = float(interior.size if params.ngtdm_norm == "interior" else data.size)
    p_i = n_i / n

    occupied = p_i > 0
    idx = np.flatnonzero(occupied).astype(np.float64)
    p = p_i[occupied]
    s = s_i[occupied]
    n_g = int(occupied.sum())

    coarseness = 1.0 / (_EPS + float(np.sum(p * s)))

    di = idx[:, None] - idx[None, :]
    if n_g > 1:
        pij = p[:, None] * p[None, :]
        contrast = (float(np.sum(pij * di**2)) / (n_g * (n_g - 1))) \
            * (float(s.sum()) / n)
    else:
        contrast = 0.0

    ps = p * s
    complexity = float(
        np.sum(np.abs(di) * (ps[:, None] + ps[None, :])
               / (n * (p[:, None] + p[None, :])))
    )
    strength = float(np.sum((p[:, None] + p[None, :]) * di**2)) \
        / (_EPS + float(s.sum()))
    return coarseness, contrast, complexity, strength


def feature_vector(img, params: FeatureParams | None = None) -> FeatureVector:
    """All 17 features of one image."""
    params = params or FeatureParams()
    mean, std, skew, kurt = first_order(img)
    co = glcm_features(glcm(img, params))
    rl = glrm_features(glrm(img, params))
    nt = ngtdm(img, params)
    return FeatureVector(mean, std, skew, kurt, *co, *rl, *nt)


def feature_matrix(images, params: FeatureParams | None = None,
                   threads: int = 1) -> np.ndarray:
    """(n_images, 17) array of features; undefined entries become NaN."""
    from .core import parallel_map
    params = params or FeatureParams()
    rows = parallel_map(lambda im: feature_vector(im, params).as_array(),
                        images, threads)
    return np.vstack(rows) if rows else np.zeros((0, len(FEATURE_NAMES)))


def family_columns(family: str) -> list[int]:
    """Column indices of a feature family within the 17-column matrix."""
    if family not in FEATURE_FAMILIES:
        raise ConfigError(f"unknown feature family {family!r}")
    return [FEATURE_NAMES.index(name) for name in FEATURE_FAMILIES[family]]
