"""The full ensemble-vs-ensemble evaluation battery.

Produces a ComparisonReport (scalar-statistic JS divergences, kNN feature
JS divergence, per-family PCA planes with TV distances, Frechet distance on
the feature cloud, and split-half noise floors for all of them) plus the
plot data behind it (gray-level PDFs, radial autocorrelation profiles, PC
projections, per-image statistic samples).
"""

from __future__ import annotations

import logging
from typing import Any, Optional

import numpy as np

from .core import DataError, Ensemble, NumericalError, split_indices
from .divergence import (ComparisonReport, fit_pca, frechet_features, jsd_1d,
                         jsd_knn, project, tv_distance_2d)
from .features import FeatureParams, feature_matrix
from .stats import autocorrelation_radial, gray_level_pdf, snr_stats, fg_ratio

logger = logging.getLogger(__name__)

SCALAR_STATS = ("snr2", "mu_i", "sigma_i")
PCA_FAMILIES = ("glcm", "glrm", "ngtdm")


def scalar_stat_table(ensemble, threads: int = 1,
                      fat_gland: Optional[tuple] = None) -> dict[str, np.ndarray]:
    """Per-image scalar statistics; undefined entries are NaN."""
    from .core import parallel_map

    def one(im):
        try:
            s = snr_stats(im)
            row = [s.snr2, s.mu_i, s.sigma_i,
                   np.nan if s.n_hat is None else s.n_hat]
        except NumericalError:
            row = [np.nan, np.nan, np.nan, np.nan]
        if fat_gland is not None:
            r = fg_ratio(im, *fat_gland)
            row.extend([r.f_fraction, r.g_fraction,
                        np.nan if r.log_ratio is None else r.log_ratio])
        return row

    rows = np.asarray(parallel_map(one, ensemble, threads), dtype=np.float64)
    names = ["snr2", "mu_i", "sigma_i", "n_hat"]
    if fat_gland is not None:
        names += ["f_fraction", "g_fraction", "log_fg_ratio"]
    return {name: rows[:, k] for k, name in enumerate(names)}


def _finite(values: np.ndarray) -> np.ndarray:
    return values[np.isfinite(values)]


def _jsd_scalar(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _finite(a), _finite(b)
    if a.size == 0 or b.size == 0:
        raise DataError("no finite samples for scalar-statistic divergence")
    return jsd_1d(a, b)


def _tv_on_pca(features_a: np.ndarray, features_b: np.ndarray,
               family: str, grid: int) -> float:
    model = fit_pca(np.vstack([features_a, features_b]), family)
    return tv_distance_2d(project(model, features_a),
                          project(model, features_b), grid=grid)


def compare_ensembles(ens_a: Ensemble, ens_b: Ensemble, *,
                      feature_params: FeatureParams | None = None,
                      knn_k: int = 5, grid: int = 64, pdf_bins: int = 256,
                      seed: int = 0, fat_gland: Optional[tuple] = None,
                      threads: int = 1) -> tuple[ComparisonReport, dict[str, Any]]:
    """Run every divergence measure between two ensembles plus noise floors.

    The noise floors apply each metric between two random halves of the
    first (reference) ensemble, using the same estimator settings.
    """
    if ens_a.dims != ens_b.dims:
        raise DataError(f"dimension mismatch: {ens_a.dims} vs {ens_b.dims}")
    if len(ens_a) < 4:
        raise DataError("reference ensemble too small for noise floors (< 4)")
    params = feature_params or FeatureParams()

    stats_a = scalar_stat_table(ens_a, threads, fat_gland)
    stats_b = scalar_stat_table(ens_b, threads, fat_gland)
    feats_a = feature_matrix(ens_a, params, threads)
    feats_b = feature_matrix(ens_b, params, threads)
    complete_a = feats_a[~np.isnan(feats_a).any(axis=1)]
    complete_b = feats_b[~np.isnan(feats_b).any(axis=1)]
    if complete_a.shape[0] <= knn_k or complete_b.shape[0] <= knn_k:
        raise DataError("too few complete feature rows for the kNN estimator")

    scalar_names = list(SCALAR_STATS)
    if fat_gland is not None:
        scalar_names.append("log_fg_ratio")

    jsd_by_statistic = {
        name: _jsd_scalar(stats_a[name], stats_b[name]) for name in scalar_names
    }
    jsd_by_statistic["texture_features"] = jsd_knn(
        complete_a, complete_b, k=knn_k, seed=seed
    )
    tv_by_family = {
        family: _tv_on_pca(feats_a, feats_b, family, grid)
        for family in PCA_FAMILIES
    }
    frechet = frechet_features(feats_a, feats_b)

    # split-half noise floors on the reference ensemble
    idx1, idx2 = split_indices(len(ens_a), seed)
    floor_jsd = {
        name: _jsd_scalar(stats_a[name][idx1], stats_a[name][idx2])
        for name in scalar_names
    }
    fa1, fa2 = feats_a[idx1], feats_a[idx2]
    ca1 = fa1[~np.isnan(fa1).any(axis=1)]
    ca2 = fa2[~np.isnan(fa2).any(axis=1)]
    if ca1.shape[0] > knn_k and ca2.shape[0] > knn_k:
        floor_jsd["texture_features"] = jsd_knn(ca1, ca2, k=knn_k, seed=seed)
    floor_tv = {
        family: _tv_on_pca(fa1, fa2, family, grid) for family in PCA_FAMILIES
    }
    floor_frechet = frechet_features(fa1, fa2)

    worst_family = max(tv_by_family, key=tv_by_family.get)
    metadata = {
        "n_a": len(ens_a),
        "n_b": len(ens_b),
        "labels_a": _label_counts(ens_a),
        "labels_b": _label_counts(ens_b),
        "feature_params": params.to_dict(),
        "knn_k": knn_k,
        "grid": grid,
        "seed": seed,
        "bin_rule": "equal-width, max(32, Freedman-Diaconis) bins",
        "pca_fit": "pooled over both ensembles (reference halves for floors)",
        "excluded_feature_rows": {
            "a": int(feats_a.shape[0] - complete_a.shape[0]),
            "b": int(feats_b.shape[0] - complete_b.shape[0]),
        },
        "excluded_scalar_rows": {
            "a": int(np.isnan(stats_a["snr2"]).sum()),
            "b": int(np.isnan(stats_b["snr2"]).sum()),
        },
        "tv_worst_family": worst_family,
    }
    report = ComparisonReport(
        jsd_by_statistic=jsd_by_statistic,
        tv_by_family=tv_by_family,
        frechet_features=frechet,
        noise_floors={
            "jsd_by_statistic": floor_jsd,
            "tv_by_family": floor_tv,
            "frechet_features": floor_frechet,
        },
        metadata=metadata,
    )

    pca_planes = {}
    for family in PCA_FAMILIES:
        model = fit_pca(np.vstack([feats_a, feats_b]), family)
        pca_planes[family] = (project(model, feats_a), project(model, feats_b))
    plots = {
        "gray_pdf_a": gray_level_pdf(ens_a, bins=pdf_bins),
        "gray_pdf_b": gray_level_pdf(ens_b, bins=pdf_bins),
        "acf_a": autocorrelation_radial(ens_a),
        "acf_b": autocorrelation_radial(ens_b),
        "pca_planes": pca_planes,
        "stats_a": stats_a,
        "stats_b": stats_b,
    }
    return report, plots


def _label_counts(ensemble: Ensemble) -> dict[str, int]:
    counts: dict[str, int] = {}
    for label in ensemble.labels:
        counts[label] = counts.get(label, 0) + 1
    return counts
