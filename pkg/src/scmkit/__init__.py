"""Synthetic control estimation with placebo inference and robustness checks."""

from .estimator import Estimate, GapSeries, MspeSummary, fit, mspe, mspe_summary, synthesize
from .generate import GeneratorSpec, GroundTruth, generate_panel
from .io import PanelFormatError, load_covariates, load_panel
from .optimizer import (
    NestedResult,
    PredictorWeights,
    SolverSettings,
    UnitWeights,
    solve_nested,
    solve_w,
)
from .panel import (
    CovariateTable,
    LagSpec,
    OutcomeKind,
    Panel,
    PredictorMatrix,
    Scheme,
    StudyDesign,
    ValidationReport,
    build_predictor_matrix,
    specification_grid,
    validate_panel,
)
from .placebo import (
    DiffEffects,
    PlaceboTable,
    diff_in_effects,
    paired_difference_ci,
    placebo_diff_in_effects,
    placebo_in_space,
    rank_by_post_mspe,
)
from .robustness import LooResult, SpecSearchResult, leave_one_out, spec_search

__version__ = "0.1.0"

__all__ = [
    "CovariateTable",
    "DiffEffects",
    "Estimate",
    "GapSeries",
    "GeneratorSpec",
    "GroundTruth",
    "LagSpec",
    "LooResult",
    "MspeSummary",
    "NestedResult",
    "OutcomeKind",
    "Panel",
    "PanelFormatError",
    "PlaceboTable",
    "PredictorMatrix",
    "PredictorWeights",
    "Scheme",
    "SolverSettings",
    "SpecSearchResult",
    "StudyDesign",
    "UnitWeights",
    "ValidationReport",
    "build_predictor_matrix",
    "diff_in_effects",
    "fit",
    "generate_panel",
    "leave_one_out",
    "load_covariates",
    "load_panel",
    "mspe",
    "mspe_summary",
    "paired_difference_ci",
    "placebo_diff_in_effects",
    "placebo_in_space",
    "rank_by_post_mspe",
    "solve_nested",
    "solve_w",
    "spec_search",
    "specification_grid",
    "synthesize",
    "validate_panel",
]
