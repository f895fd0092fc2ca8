"""Penalized QIF estimation for generalized additive partial linear models."""
from .core import (CapabilityError, ClusterDataset, ConvergenceError, DimensionError, DomainError,
                   FitConfig, GaplmError, GenerationError, NumericError, SingularityError, Theta,
                   pack, unpack, validate_dataset)
from .kernels import get_backend
from .metrics import model_error, msee, mspe
from .model import FitReport
from .penalty import PenaltySpec, classify_selection, fit_penalized
from .qif import QIFProblem, beta_covariance, extract_alpha, fit_unpenalized
from .simulate import gen_example1, gen_example2, gen_example3, generate
from .splines import SplineSystem
from .study import run_study
from .tuning import fit_at, select_lambda

__version__ = "0.1.0"

__all__ = [
    "CapabilityError", "ClusterDataset", "ConvergenceError", "DimensionError", "DomainError",
    "FitConfig", "FitReport", "GaplmError", "GenerationError", "NumericError", "PenaltySpec",
    "QIFProblem", "SingularityError", "SplineSystem", "Theta", "beta_covariance",
    "classify_selection", "extract_alpha", "fit_at", "fit_penalized", "fit_unpenalized",
    "gen_example1", "gen_example2", "gen_example3", "generate", "get_backend", "model_error",
    "msee", "mspe", "pack", "run_study", "select_lambda", "unpack", "validate_dataset",
]
