"""Data-aware distance comparison operations for approximate K-nearest-neighbor search.

Vectors are rotated by a PCA transform; the distance to a candidate is then
estimated from a growing prefix of components, scaled by the share of variance
that prefix holds, and the candidate is dropped as soon as the estimate
exceeds a calibrated bound on the search threshold.
"""

from .calibration import CalibrationTable, calibrate, load_calibration, save_calibration, validate_calibration
from .errors import CalibrationError, ConfigurationError, ConvergenceError, DadeError, FormatError, InvalidInputError
from .estimator import (ADSampling, DADE, DcoOutcome, DcoStats, FDScanning, FixedDim, adsampling_dco,
                        adsampling_estimate, dade_dco, dade_estimate, fd_scanning_dco, fixed_dim_dco,
                        partial_sqdist)
from .hnsw import HnswGraph, build_hnsw, search_hnsw
from .io import (GroundTruth, SyntheticConfig, compute_ground_truth, generate_synthetic, read_fvecs, read_ivecs,
                 recall, write_fvecs, write_ivecs)
from .ivf import IvfIndex, build_ivf, kmeans, search_ivf
from .search import SearchResult, linear_scan
from .transform import (OrthoTransform, apply_transform, compute_covariance, fit_pca, fit_random_orthogonal,
                        load_transform, save_transform)

__version__ = "0.1.0"
