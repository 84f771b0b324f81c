"""Second-degree sensor network compression and fusion."""

from .channel import ChannelFitState, ChannelSpec, ai_fit, psi, psi_direct, state_from_model
from .covmodel import (
    BlockPartition,
    CovariancePack,
    gaussian_analytic_covariances,
    lift_sample,
    read_matrix,
    reduce,
    sample_covariances,
    write_matrix,
)
from .linear import compare_condition, error_linear_formula, linear_fit
from .matalg import InvalidInputError, NotPSDError, NumericalFailure, pinv, svd, truncate
from .mbi import FitConfig, FitTrace, apply_network, extract_models, mbi_fit
from .sdt import (
    FusionCenter,
    NetworkModel,
    SecondDegreeSensor,
    error_block_formula,
    error_exact,
    mse_moment,
    sdt_single,
)

__all__ = [
    "BlockPartition", "ChannelFitState", "ChannelSpec", "CovariancePack", "FitConfig",
    "FitTrace", "FusionCenter", "InvalidInputError", "NetworkModel", "NotPSDError",
    "NumericalFailure", "SecondDegreeSensor", "ai_fit", "apply_network",
    "compare_condition", "error_block_formula", "error_exact", "error_linear_formula",
    "extract_models", "gaussian_analytic_covariances", "lift_sample", "linear_fit",
    "mbi_fit", "mse_moment", "pinv", "psi", "psi_direct", "read_matrix", "reduce",
    "sample_covariances", "sdt_single", "state_from_model", "svd", "truncate",
    "write_matrix",
]
