"""Covariate-balancing functional propensity score weighting.

Estimates causal effects of curve-valued treatments from observational data:
functional principal component analysis reduces each treatment curve to a
score vector, balancing weights remove the score-covariate correlation
(parametric method of moments or nonparametric regularized empirical
likelihood), and a weighted truncation fit of a scalar-on-function outcome
model yields the effect curve.
"""

__version__ = "0.1.0"

from .exceptions import (
    BootstrapError,
    CbfpsError,
    ConvergenceError,
    DataError,
    InfeasibleProblemError,
    InfeasibleThetaError,
    InsufficientDataError,
    SingularMatrixError,
)
from .fdata import FunctionalSample, Grid, center, inner_product
from .fpca import FpcaModel, StandardizedDesign, decompose, select_rank, standardize
from .balance_param import (
    BalanceWeights,
    ParamFit,
    estimate_weights_param,
    solve_mom,
    weight_formula,
)
from .balance_np import (
    ElProblem,
    ElSolution,
    estimate_weights_np,
    inner_solve,
    moment_vector,
)
from .outcome import (
    AviRanking,
    BootstrapBands,
    CoefficientTable,
    EffectEstimate,
    avi_rank,
    avi_select,
    bootstrap_bands,
    fit_interaction,
    fit_truncated,
    integrated_effect,
)
from .metrics import (
    AccuracyReport,
    ise,
    summarize_runs,
    weighted_abs_correlation,
    weighted_f_statistic,
)
from .simgen import SimConfig, SimulatedData, analytic_eigenfunctions, generate, true_effect
from .pipeline import ExperimentConfig, estimate_weights, run_pipeline

__all__ = [
    "__version__",
    "BootstrapError",
    "CbfpsError",
    "ConvergenceError",
    "DataError",
    "InfeasibleProblemError",
    "InfeasibleThetaError",
    "InsufficientDataError",
    "SingularMatrixError",
    "FunctionalSample",
    "Grid",
    "center",
    "inner_product",
    "FpcaModel",
    "StandardizedDesign",
    "decompose",
    "select_rank",
    "standardize",
    "BalanceWeights",
    "ParamFit",
    "estimate_weights_param",
    "solve_mom",
    "weight_formula",
    "ElProblem",
    "ElSolution",
    "estimate_weights_np",
    "inner_solve",
    "moment_vector",
    "AviRanking",
    "BootstrapBands",
    "CoefficientTable",
    "EffectEstimate",
    "avi_rank",
    "avi_select",
    "bootstrap_bands",
    "fit_interaction",
    "fit_truncated",
    "integrated_effect",
    "AccuracyReport",
    "ise",
    "summarize_runs",
    "weighted_abs_correlation",
    "weighted_f_statistic",
    "SimConfig",
    "SimulatedData",
    "analytic_eigenfunctions",
    "generate",
    "true_effect",
    "ExperimentConfig",
    "estimate_weights",
    "run_pipeline",
]
