"""Statistical weighted fuzzy c-means.

Likelihood-based soft clustering with cluster-specific weights: blockwise
MM fitting with an importance-sampled normalizing constant, bootstrap and
likelihood-ratio inference, Metropolis-Hastings synthetic data generation,
and weighted Xie-Beni model selection.
"""

__version__ = "0.1.0"

from .data import Dataset, MembershipMatrix, ModelParams, ParamBounds
from .estimator import FitConfig, FitResult, classic_fcm, fit, fit_fixed_m, init_params
from .exceptions import NumericalError, ValidationError, WfcmError
from .inference import (
    BootstrapReport,
    LrtReport,
    align_labels,
    bootstrap,
    chi_square_sf,
    lrt_equal_centers,
    percentile_ci,
)
from .model import energy, fcm_loss, memberships, nll, sigma_w, wfcm_loss
from .normalizer import ISEstimate, estimate_log_c, log_c_quadrature
from .proposal import ProposalModel, fit_gmm, gmm_logpdf, gmm_sample, select_components
from .sampler import ChainConfig, mh_sample
from .selection import ValidityGrid, classic_xbi, select_k, weighted_xbi

__all__ = [
    "Dataset",
    "MembershipMatrix",
    "ModelParams",
    "ParamBounds",
    "FitConfig",
    "FitResult",
    "classic_fcm",
    "fit",
    "fit_fixed_m",
    "init_params",
    "WfcmError",
    "ValidationError",
    "NumericalError",
    "BootstrapReport",
    "LrtReport",
    "align_labels",
    "bootstrap",
    "chi_square_sf",
    "lrt_equal_centers",
    "percentile_ci",
    "energy",
    "fcm_loss",
    "memberships",
    "nll",
    "sigma_w",
    "wfcm_loss",
    "ISEstimate",
    "estimate_log_c",
    "log_c_quadrature",
    "ProposalModel",
    "fit_gmm",
    "gmm_logpdf",
    "gmm_sample",
    "select_components",
    "ChainConfig",
    "mh_sample",
    "ValidityGrid",
    "classic_xbi",
    "select_k",
    "weighted_xbi",
]
