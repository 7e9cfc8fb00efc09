"""Distribution-comparison measures between two ensembles.

Histogram Jensen-Shannon divergence for scalar statistics, a k-nearest-
neighbor estimator for joint feature distributions, PCA per feature family
with total-variation distance on the projected planes, the Frechet distance
between Gaussian fits of feature clouds, and the split-half noise floor that
baselines every metric.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .core import DataError, Ensemble, NumericalError, split_halves
from .features import FEATURE_FAMILIES, family_columns

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
_DUP_EPS = 1e-12


def histogram_bin_count(values: np.ndarray, minimum: int = 32) -> int:
    """Freedman-Diaconis bin count with a floor of `minimum`."""
    values = np.asarray(values, dtype=np.float64).ravel()
    span = float(values.max() - values.min())
    if span <= 0 or values.size < 2:
        return minimum
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    if iqr <= 0:
        return minimum
    width = 2.0 * iqr * values.size ** (-1.0 / 3.0)
    return max(minimum, math.ceil(span / width))


def _mass_histogram(values: np.ndarray, bins: int,
                    lo: float, hi: float) -> np.ndarray:
    counts, _ = np.histogram(values, bins=bins, range=(lo, hi))
    return counts / counts.sum()


def jsd_1d(a, b) -> float:
    """Jensen-Shannon divergence (nats) between two scalar sample sets.

    Both samples are histogrammed on a shared equal-width grid over the
    pooled range; empty bins contribute zero. Bounded by ln 2, zero for
    identical histograms.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise NumericalError("empty sample set")
    pooled = np.concatenate([a, b])
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi == lo:
        return 0.0
    bins = histogram_bin_count(pooled)
    p = _mass_histogram(a, bins, lo, hi)
    q = _mass_histogram(b, bins, lo, hi)
    m = 0.5 * (p + q)
    kl_pm = float(np.sum(p[p > 0] * np.log(p[p > 0] / m[p > 0])))
    kl_qm = float(np.sum(q[q > 0] * np.log(q[q > 0] / m[q > 0])))
    return 0.5 * kl_pm + 0.5 * kl_qm


def _knn_kl(x: np.ndarray, other: np.ndarray, k: int) -> float:
    """Wang-Kulkarni-Verdu kNN estimate of KL(x-distribution || other)."""
    n, dim = x.shape
    m = other.shape[0]
    own = cKDTree(x)
    rho = own.query(x, k=k + 1)[0][:, k]          # k-th neighbor, self excluded
    cross_d = cKDTree(other).query(x, k=k + 1)[0]
    # a zero nearest distance means the query point itself is in `other`
    self_hit = cross_d[:, 0] == 0.0
    nu = np.where(self_hit, cross_d[:, k], cross_d[:, k - 1])
    dup = int(np.sum(rho == 0.0) + np.sum(nu == 0.0))
    if dup:
        logger.info("kNN divergence: %d zero distances jittered to %.0e",
                    dup, _DUP_EPS)
        rho = np.maximum(rho, _DUP_EPS)
        nu = np.maximum(nu, _DUP_EPS)
    return float(dim / n * np.sum(np.log(nu / rho)) + math.log(m / (n - 1)))


def jsd_knn(a, b, k: int = 5, seed: int = 0) -> float:
    """kNN estimate of the JS divergence between two multivariate samples.

    Columns are standardized with the pooled mean/std. The mixture is
    realized by resampling ceil((n_a + n_b) / 2) pooled rows without
    replacement; the result is clamped to [0, ln 2].
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DataError(f"column mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] <= k or b.shape[0] <= k:
        raise DataError(f"need more than k={k} rows in each sample")
    pooled = np.vstack([a, b])
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    std[std == 0.0] = 1.0
    a = (a - mean) / std
    b = (b - mean) / std
    pooled = np.vstack([a, b])

    m_count = math.ceil(pooled.shape[0] / 2)
    gen = np.random.default_rng(seed)
    mixture = pooled[gen.choice(pooled.shape[0], size=m_count, replace=False)]

    est = 0.5 * _knn_kl(a, mixture, k) + 0.5 * _knn_kl(b, mixture, k)
    return min(max(est, 0.0), LN2)


@dataclass(frozen=True)
class PcaModel:
    """Top-2 principal directions of one (standardized) feature family."""

    feature_family: str
    means: np.ndarray
    scales: np.ndarray
    components: np.ndarray          # (2, n_kept_columns), orthonormal rows
    explained_variance: np.ndarray  # (2,), non-increasing
    kept_columns: np.ndarray        # indices into the input columns


def _select_family(features: np.ndarray, family: str) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if family in FEATURE_FAMILIES and features.shape[1] == 17:
        return features[:, family_columns(family)]
    return features


def fit_pca(features, family: str, standardize: bool = True) -> PcaModel:
    """PCA of a feature family via covariance eigendecomposition.

    Rows with NaN entries are dropped; zero-variance columns are dropped with
    a warning. The two leading eigenvectors get a deterministic sign (their
    largest-magnitude loading is positive).
    """
    data = _select_family(features, family)
    data = data[~np.isnan(data).any(axis=1)]
    if data.shape[0] < 3:
        raise DataError(f"need at least 3 complete rows, got {data.shape[0]}")
    means = data.mean(axis=0)
    scales = data.std(axis=0) if standardize else np.ones(data.shape[1])
    kept = np.flatnonzero(scales > 0.0) if standardize \
        else np.arange(data.shape[1])
    if standardize and kept.size < data.shape[1]:
        logger.warning("PCA(%s): dropping %d zero-variance columns",
                       family, data.shape[1] - kept.size)
    if kept.size < 2:
        raise NumericalError("fewer than 2 usable columns for PCA")
    z = (data[:, kept] - means[kept]) / scales[kept]
    cov = np.cov(z, rowvar=False)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:2]
    components = eigvecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(family, means[kept], scales[kept], components,
                    eigvals[order], kept)


def project(model: PcaModel, features) -> np.ndarray:
    """Project feature rows onto the model's two principal directions."""
    data = _select_family(features, model.feature_family)
    data = data[~np.isnan(data).any(axis=1)]
    z = (data[:, model.kept_columns] - model.means) / model.scales
    return z @ model.components.T


def tv_distance_2d(a, b, grid: int = 64,
                   bounds: Optional[tuple] = None) -> float:
    """Total-variation distance between 2D sample clouds on a shared grid.

    Histogram both clouds over the pooled bounding box (or explicit bounds
    ((x_lo, x_hi), (y_lo, y_hi))) and return half the L1 distance of the
    normalized mass functions; in [0, 1].
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != 2 or b.shape[1] != 2:
        raise DataError("tv_distance_2d expects 2-column samples")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise NumericalError("empty sample set")
    if bounds is None:
        pooled = np.vstack([a, b])
        lo = pooled.min(axis=0)
        hi = pooled.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        bounds = ((lo[0], hi[0]), (lo[1], hi[1]))
    h_a, _, _ = np.histogram2d(a[:, 0], a[:, 1], bins=grid, range=bounds)
    h_b, _, _ = np.histogram2d(b[:, 0], b[:, 1], bins=grid, range=bounds)
    return float(0.5 * np.abs(h_a / h_a.sum() - h_b / h_b.sum()).sum())


def _sqrt_psd(matrix: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(matrix)
    # tolerance is relative to the matrix scale (features carry mixed units)
    floor = -tol * max(1.0, float(eigvals.max()))
    if eigvals.min() < floor:
        raise NumericalError(
            f"matrix has eigenvalue {eigvals.min():.3e} below {floor:.3e}"
        )
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def frechet_features(a, b) -> float:
    """Squared Frechet distance between Gaussian fits of two feature clouds.

    d^2 = |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with the cross
    term evaluated through the symmetrized product sqrt(S_a) S_b sqrt(S_a);
    eigenvalues below -1e-8 are rejected, smaller negatives clamped to zero.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DataError(f"column mismatch: {a.shape[1]} vs {b.shape[1]}")
    a = a[~np.isnan(a).any(axis=1)]
    b = b[~np.isnan(b).any(axis=1)]
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise NumericalError("covariance not computable from fewer than 2 rows")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))
    root_a = _sqrt_psd(cov_a)
    cross = _sqrt_psd(root_a @ cov_b @ root_a)
    diff = mu_a - mu_b
    d2 = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b)
               - 2.0 * np.trace(cross))
    return max(d2, 0.0)


def noise_floor(ensemble: Ensemble,
                metric: Callable[[Ensemble, Ensemble], float],
                seed: int) -> float:
    """Metric value between two i.i.d. halves of one ensemble.

    The split-half baseline of any cross-ensemble metric: values at or below
    this level are indistinguishable from sampling noise.
    """
    if len(ensemble) < 4:
        raise DataError(f"need at least 4 images, got {len(ensemble)}")
    half_a, half_b = split_halves(ensemble, seed)
    return metric(half_a, half_b)


@dataclass
class ComparisonReport:
    """All divergence measures between two ensembles plus their noise floors."""

    jsd_by_statistic: dict[str, float]
    tv_by_family: dict[str, float]
    frechet_features: float
    noise_floors: dict[str, Any]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, value in self.jsd_by_statistic.items():
            if not -1e-12 <= value <= LN2 + 1e-12:
                raise NumericalError(f"JSD[{name}]={value} outside [0, ln 2]")
        for name, value in self.tv_by_family.items():
            if not -1e-12 <= value <= 1.0 + 1e-12:
                raise NumericalError(f"TV[{name}]={value} outside [0, 1]")
        if self.frechet_features < 0:
            raise NumericalError("negative Frechet distance")

    def to_dict(self) -> dict:
        return {
            "jsd_by_statistic": self.jsd_by_statistic,
            "tv_by_family": self.tv_by_family,
            "frechet_features": self.frechet_features,
            "noise_floors": self.noise_floors,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ComparisonReport":
        return cls(
            jsd_by_statistic=dict(payload["jsd_by_statistic"]),
            tv_by_family=dict(payload["tv_by_family"]),
            frechet_features=float(payload["frechet_features"]),
            noise_floors=dict(payload["noise_floors"]),
            metadata=dict(payload.get("metadata", {})),
        )
