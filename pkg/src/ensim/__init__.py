"""ensim: stochastic image-model ensembles and their statistical comparison.

Generators for clustered lumpy backgrounds, ultrasound speckle envelopes,
and multi-tissue composition phantoms; per-image texture features and
speckle statistics; divergence measures between ensembles with split-half
noise floors; a CLI that orchestrates generation, feature extraction,
comparison, and parameter sweeps.
"""

__version__ = "0.1.0"

from .clb import ClbConfig, ClbLayer, DegradeConfig, blob_profile, degrade, \
    generate_clb, generate_mixed
from .core import ConfigError, DataError, Ensemble, EnsimError, Image, \
    NumericalError, RngStream, quantize_ensemble, split_halves
from .dataset import load_ensemble, save_ensemble
from .divergence import ComparisonReport, PcaModel, fit_pca, frechet_features, \
    jsd_1d, jsd_knn, noise_floor, project, tv_distance_2d
from .features import FeatureParams, FeatureVector, feature_matrix, \
    feature_vector, first_order, glcm, glcm_features, glrm, glrm_features, \
    ngtdm
from .report import compare_ensembles
from .speckle import ResolutionCell, UssConfig, generate_mixed_uss, \
    generate_speckle, resolution_cell
from .stats import FgRatio, GaussianFit, Pdf1D, RadialProfile, SpeckleStats, \
    autocorrelation_radial, fg_ratio, gaussian_fit, gray_level_pdf, \
    papoulis_window, snr_stats
from .tissue import TissueClass, TissueConfig, generate_tissue_ensemble
