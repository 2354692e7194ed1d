"""FDP estimation for dependent test statistics with unknown covariance.

The covariance is estimated by principal components plus adaptive
thresholding of the residual covariance; the false discovery proportion is
then approximated from the leading factors of the estimate.
"""

from .core import (
    DomainError,
    FactorRepresentation,
    HypothesisTruth,
    InsufficientDataError,
    NumericError,
    ParameterError,
    PoetPfaError,
    RankError,
    ShapeError,
    std_normal_cdf,
    std_normal_quantile,
)
from .eigen import EigenSystem, eigsh_perturbation_report, sym_eigen, top_eigen, top_k_loadings
from .pfa import (
    FactorRealization,
    FdpReport,
    PfaFit,
    adjusted_statistics,
    estimate_w,
    fdp_adjusted_estimate,
    fdp_curve,
    fdp_estimate,
    fit_pfa,
    pvalues,
    rejection_counts,
)
from .poet import PoetConfig, PoetEstimate, poet_covariance, sample_covariance, to_correlation
from .sim import (
    SimulationConfig,
    generate_dataset,
    run_fdp_experiment,
    run_k_sweep,
    run_power_experiment,
    two_sample_statistics,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "EigenSystem",
    "FactorRealization",
    "FactorRepresentation",
    "FdpReport",
    "HypothesisTruth",
    "InsufficientDataError",
    "NumericError",
    "ParameterError",
    "PfaFit",
    "PoetConfig",
    "PoetEstimate",
    "PoetPfaError",
    "RankError",
    "ShapeError",
    "SimulationConfig",
    "adjusted_statistics",
    "eigsh_perturbation_report",
    "estimate_w",
    "fdp_adjusted_estimate",
    "fdp_curve",
    "fdp_estimate",
    "fit_pfa",
    "generate_dataset",
    "poet_covariance",
    "pvalues",
    "rejection_counts",
    "run_fdp_experiment",
    "run_k_sweep",
    "run_power_experiment",
    "sample_covariance",
    "std_normal_cdf",
    "std_normal_quantile",
    "sym_eigen",
    "to_correlation",
    "top_eigen",
    "top_k_loadings",
    "two_sample_statistics",
]
