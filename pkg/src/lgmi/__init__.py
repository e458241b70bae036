"""Entropy and mutual information from local Gaussian density estimates."""
from ._accel import backend
from .core import (
    BandwidthMatrix,
    DegenerateData,
    DimensionMismatch,
    DuplicateRowsWarning,
    EmptyInput,
    EstimateReport,
    EstimatorName,
    GaussianParams,
    KTooLarge,
    LgmiError,
    NonFiniteEntry,
    SampleSet,
    gaussian_log_density,
    validate_samples,
)
from .estimators import (
    MiTask,
    estimate_entropy_kl,
    estimate_entropy_lgde,
    estimate_mi_kl,
    estimate_mi_ksg,
    estimate_mi_lgde,
)
from .lgde import (
    FitStatus,
    LgdeOptions,
    LocalGaussianFit,
    LocalLikelihoodProblem,
    OptimizerOptions,
    build_problem,
    fit_local_gaussian,
    lgde_density_at_samples,
    local_likelihood,
    local_likelihood_gradient,
    local_likelihood_hessian,
    penalty_term,
)
from .neighbors import BandwidthRule, Metric, NeighborIndex, knn_query, select_bandwidth
from .synth import Family, RelationshipSpec, generate, true_mi

__version__ = "0.1.0"

__all__ = [
    "BandwidthMatrix",
    "BandwidthRule",
    "DegenerateData",
    "DimensionMismatch",
    "DuplicateRowsWarning",
    "EmptyInput",
    "EstimateReport",
    "EstimatorName",
    "Family",
    "FitStatus",
    "GaussianParams",
    "KTooLarge",
    "LgdeOptions",
    "LgmiError",
    "LocalGaussianFit",
    "LocalLikelihoodProblem",
    "Metric",
    "MiTask",
    "NeighborIndex",
    "NonFiniteEntry",
    "OptimizerOptions",
    "RelationshipSpec",
    "SampleSet",
    "__version__",
    "backend",
    "build_problem",
    "estimate_entropy_kl",
    "estimate_entropy_lgde",
    "estimate_mi_kl",
    "estimate_mi_ksg",
    "estimate_mi_lgde",
    "fit_local_gaussian",
    "gaussian_log_density",
    "generate",
    "knn_query",
    "lgde_density_at_samples",
    "local_likelihood",
    "local_likelihood_gradient",
    "local_likelihood_hessian",
    "penalty_term",
    "select_bandwidth",
    "true_mi",
    "validate_samples",
]
