"""Entropy and mutual information estimation with Gaussian mixture models."""

__version__ = "0.1.0"

from .entropy import (
    BoundedTransform,
    EntropyEstimate,
    EntropyMethod,
    entropy_bounded_gmm,
    entropy_gmm,
    entropy_mc,
    entropy_mle_gaussian,
    entropy_sote,
    entropy_ut,
    entropy_var,
    entropy_weighted_form,
    estimate_entropy,
)
from .gaussian import CovarianceMatrix, GaussianComponent, gaussian_entropy, gaussian_kl, log_pdf
from .info import max_spanning_tree, mi_matrix, mutual_information
from .mixture import CovarianceFamily, FitConfig, MixtureModel, fit_em, select_model

__all__ = [
    "BoundedTransform",
    "CovarianceFamily",
    "CovarianceMatrix",
    "EntropyEstimate",
    "EntropyMethod",
    "FitConfig",
    "GaussianComponent",
    "MixtureModel",
    "__version__",
    "entropy_bounded_gmm",
    "entropy_gmm",
    "entropy_mc",
    "entropy_mle_gaussian",
    "entropy_sote",
    "entropy_ut",
    "entropy_var",
    "entropy_weighted_form",
    "estimate_entropy",
    "fit_em",
    "gaussian_entropy",
    "gaussian_kl",
    "log_pdf",
    "max_spanning_tree",
    "mi_matrix",
    "mutual_information",
    "select_model",
]
