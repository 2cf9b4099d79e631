"""Shrinkage estimation of precision matrices and regression coefficients
under scale-mixture-of-uniform priors, fitted by block Gibbs sampling."""

from .errors import (
    ConfigError,
    DomainError,
    InfeasibleStateError,
    InvalidSpecError,
    NotPositiveDefiniteError,
    RhoOutOfRangeError,
    SmugibbsError,
    UnderflowRateError,
)
from .gibbs import ChainResult, ConstraintLedger, GibbsState, run_chain
from .priors import (
    PriorSpec,
    TauHyperPrior,
    double_pareto,
    exponential_power,
    inverse_conditional_cdf,
    log_density,
    logarithmic,
    mixing_log_density,
    student_t,
)
from .regression import RegressionData, run_regression_chain
from .mcar import AdjacencyModel, McarSpec, car_precision, fit_mcar, prior_elicitation_sim

__all__ = [
    "AdjacencyModel",
    "ChainResult",
    "ConfigError",
    "ConstraintLedger",
    "DomainError",
    "GibbsState",
    "InfeasibleStateError",
    "InvalidSpecError",
    "McarSpec",
    "NotPositiveDefiniteError",
    "PriorSpec",
    "RegressionData",
    "RhoOutOfRangeError",
    "SmugibbsError",
    "TauHyperPrior",
    "UnderflowRateError",
    "car_precision",
    "double_pareto",
    "exponential_power",
    "fit_mcar",
    "inverse_conditional_cdf",
    "log_density",
    "logarithmic",
    "mixing_log_density",
    "prior_elicitation_sim",
    "run_chain",
    "run_regression_chain",
    "student_t",
]

__version__ = "0.1.0"
