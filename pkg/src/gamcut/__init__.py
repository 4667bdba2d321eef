"""gamcut: optimal cut-off points for categorizing continuous predictors in
exponential-family regression models.

The pipeline fits a P-spline additive model, collapses each target smooth to
a piecewise-constant function by minimizing an inverse-variance weighted MSE
over cut locations, and selects the number of categories with a pseudo-BIC
subject to a consecutive-category significance gate.
"""

from .basis import BasisSpec, PenaltyMatrix, build_knots, difference_penalty, evaluate_basis
from .cutpoints import (
    CutVector,
    OptimizedCuts,
    PiecewiseSummary,
    candidate_grid,
    default_min_bin,
    initialize_cuts,
    optimize_cuts,
    piecewise_means,
    wmse,
)
from .data import Dataset, read_delimited
from .errors import (
    ConvergenceError,
    DataError,
    EmptyCategoryError,
    GamcutError,
    InfeasibleCutsError,
    RankDeficiencyError,
)
from .families import Binomial, Family, Gaussian, Poisson, get_family
from .gam import (
    CategoricalTerm,
    FittedGAM,
    LinearTerm,
    ModelSpec,
    SmoothTerm,
    StepTerm,
    effective_dimension,
    fit_gam,
    pointwise_se,
)
from .glm import ParametricFit, irls_fit, log_likelihood
from .selection import (
    CategorizedModel,
    SelectionResult,
    adjacent_significance,
    bic_value,
    fit_categorized,
    pseudo_bic_value,
    select_num_cuts,
)
from .simulation import (
    ReplicateReport,
    ScenarioSpec,
    generate_scenario,
    mse_of_replicate,
    run_replicates,
    scenario,
)

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "Binomial",
    "CategoricalTerm",
    "CategorizedModel",
    "ConvergenceError",
    "CutVector",
    "DataError",
    "Dataset",
    "EmptyCategoryError",
    "Family",
    "FittedGAM",
    "GamcutError",
    "Gaussian",
    "InfeasibleCutsError",
    "LinearTerm",
    "ModelSpec",
    "OptimizedCuts",
    "ParametricFit",
    "PenaltyMatrix",
    "PiecewiseSummary",
    "Poisson",
    "RankDeficiencyError",
    "ReplicateReport",
    "ScenarioSpec",
    "SelectionResult",
    "SmoothTerm",
    "StepTerm",
    "adjacent_significance",
    "bic_value",
    "build_knots",
    "candidate_grid",
    "default_min_bin",
    "difference_penalty",
    "effective_dimension",
    "evaluate_basis",
    "fit_categorized",
    "fit_gam",
    "generate_scenario",
    "get_family",
    "initialize_cuts",
    "irls_fit",
    "log_likelihood",
    "mse_of_replicate",
    "optimize_cuts",
    "piecewise_means",
    "pointwise_se",
    "pseudo_bic_value",
    "read_delimited",
    "run_replicates",
    "scenario",
    "select_num_cuts",
    "wmse",
]
