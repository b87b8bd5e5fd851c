"""Bayesian shrinkage estimation for matrix exponential spatial specification models."""

__version__ = "0.1.0"

from .errors import (
    CalibrationError,
    ChainAbortedError,
    FactorizationError,
    MessError,
    NumericalError,
    ValidationError,
)
from .priors import PriorConfig, prior_label
from .sampler import ModelData, PosteriorDraws, SamplerConfig, fit, run_mcmc, summarize
from .spatial import SpatialWeights, build_knn_weights, mess_apply

__all__ = [
    "CalibrationError",
    "ChainAbortedError",
    "FactorizationError",
    "MessError",
    "NumericalError",
    "ValidationError",
    "PriorConfig",
    "prior_label",
    "ModelData",
    "PosteriorDraws",
    "SamplerConfig",
    "fit",
    "run_mcmc",
    "summarize",
    "SpatialWeights",
    "build_knn_weights",
    "mess_apply",
]
