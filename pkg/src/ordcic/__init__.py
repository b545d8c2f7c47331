"""Changes-in-changes for ordered outcomes with one-sided underreporting.

Per-cell copula maximum likelihood, counterfactual parameter construction,
distributional treatment effects with delta-method standard errors,
nonparametric partial-identification bounds with bootstrap bands, a
likelihood-ratio pre-trend test, and a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .bounds import (
    BoundsResult,
    CellBoundInputs,
    bootstrap_bound_ci,
    cell_bounds,
    cic_interval,
    counterfactual_bounds,
    feasibility_check,
    smooth_envelope_bounds,
    smooth_minmax,
)
from .copulas import CopulaSpec, calibrate_theta, copula_cdf, sample_pair, spearman_rho
from .effects import (
    DttResult,
    PretrendResult,
    copula_decomposition,
    counterfactual_params,
    dtt_consumption,
    dtt_reporting,
    dtt_standard_errors,
    marginalize_dtt,
    pretrend_lr_test,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateCellError,
    DomainError,
    InfeasibleAlphaError,
    InputError,
    OrdCicError,
)
from .estimators import CellModel, CicBounds, OrderedCicEstimator
from .fitting import FitOptions, FittedCell, fit_cell, fit_ordered_probit
from .model import (
    CellParams,
    ObservationSet,
    Thresholds,
    cell_upper_tail,
    neg_log_likelihood,
    outcome_pmf,
    simulate_cell,
)
from .montecarlo import DESIGN_CASES, DesignCase, SeparableDgp, make_cic_cells, run_design
from .stats import (
    DiscreteCdf,
    empirical_cdf,
    gen_inverse_left,
    gen_inverse_right,
    std_normal_cdf,
    std_normal_quantile,
)

__all__ = [
    "__version__",
    "BoundsResult",
    "CellBoundInputs",
    "CellModel",
    "CellParams",
    "CicBounds",
    "ConfigError",
    "ConvergenceError",
    "CopulaSpec",
    "DegenerateCellError",
    "DesignCase",
    "DESIGN_CASES",
    "DiscreteCdf",
    "DomainError",
    "DttResult",
    "FitOptions",
    "FittedCell",
    "InfeasibleAlphaError",
    "InputError",
    "ObservationSet",
    "OrdCicError",
    "OrderedCicEstimator",
    "PretrendResult",
    "SeparableDgp",
    "Thresholds",
    "bootstrap_bound_ci",
    "calibrate_theta",
    "cell_bounds",
    "cell_upper_tail",
    "cic_interval",
    "copula_cdf",
    "copula_decomposition",
    "counterfactual_bounds",
    "counterfactual_params",
    "dtt_consumption",
    "dtt_reporting",
    "dtt_standard_errors",
    "empirical_cdf",
    "feasibility_check",
    "fit_cell",
    "fit_ordered_probit",
    "gen_inverse_left",
    "gen_inverse_right",
    "make_cic_cells",
    "marginalize_dtt",
    "neg_log_likelihood",
    "outcome_pmf",
    "pretrend_lr_test",
    "run_design",
    "sample_pair",
    "simulate_cell",
    "smooth_envelope_bounds",
    "smooth_minmax",
    "spearman_rho",
    "std_normal_cdf",
    "std_normal_quantile",
]
