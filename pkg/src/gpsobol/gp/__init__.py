"""Gaussian-process metamodel."""

from .kernels import Hyperparameters, KernelKind, KernelSpec, kernel_eval, kernel_matrix
from .model import (
    FitConfig,
    Prediction,
    TrainedGP,
    TrainingSet,
    cholesky_with_jitter,
    condition,
    fit,
    from_standard,
    lml_and_gradient,
    lml_gradient,
    log_marginal_likelihood,
    predict,
    predict_mean,
    predict_raw,
    to_standard,
)
from .sampling import DEFAULT_BLOCK_SIZE, ProjectionBin, project_mean, sample_realizations

__all__ = [
    "DEFAULT_BLOCK_SIZE",
    "FitConfig",
    "Hyperparameters",
    "KernelKind",
    "KernelSpec",
    "Prediction",
    "ProjectionBin",
    "TrainedGP",
    "TrainingSet",
    "cholesky_with_jitter",
    "condition",
    "fit",
    "from_standard",
    "kernel_eval",
    "kernel_matrix",
    "lml_and_gradient",
    "lml_gradient",
    "log_marginal_likelihood",
    "predict",
    "predict_mean",
    "predict_raw",
    "project_mean",
    "sample_realizations",
    "to_standard",
]
