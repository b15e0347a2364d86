"""Smoothness-penalized Tucker decomposition of 3-way tensors with missing data."""

from .tensor import (
    FrontalSlice,
    MaskedTensor,
    fold,
    mode_product,
    restricted_norm_sq,
    unfold,
)
from .smoothing import (
    SmoothingOperator,
    build_operator,
    penalty_operator,
    second_difference_matrix,
)
from .decompose import (
    Decomposition,
    FitOptions,
    UnidentifiableFiberError,
    default_initial_l,
    fit_complete,
    fit_missing,
    fit_penalized_components,
    impute_step,
    objective,
    random_initial_l,
    recover_l,
    solve_core,
    update_r,
    update_u,
)
from .postprocess import (
    EffectCurves,
    IdentifiedDecomposition,
    component_effect_curves,
    component_variance_profile,
    explained_variance,
    identify,
)
from .tuning import (
    CvReport,
    FoldAssignment,
    GridPoint,
    GridSpec,
    ParsimonyReport,
    cv_error,
    grid_search,
    make_folds,
    parsimony_report,
)
from .simulate import (
    SimulationConfig,
    SimulatedTruth,
    StudyResult,
    add_noise,
    apply_random_missing,
    apply_structured_missing,
    default_core_covariance,
    default_core_mean,
    default_measure_basis,
    default_temporal_basis,
    generate_truth,
    loss_reconstruction,
    loss_subspace,
    run_study,
)
from .ingest import (
    ABPM_BOUNDS,
    InputFormatError,
    LongRecord,
    NormalizationInfo,
    denormalize,
    gridify,
    quality_filter,
    read_long_csv,
    write_long_csv,
)
from .datasets import DemoDataset, demo_records, write_demo_csv

__version__ = "0.1.0"

__all__ = [
    "ABPM_BOUNDS",
    "CvReport",
    "Decomposition",
    "DemoDataset",
    "EffectCurves",
    "FitOptions",
    "FoldAssignment",
    "FrontalSlice",
    "GridPoint",
    "GridSpec",
    "IdentifiedDecomposition",
    "InputFormatError",
    "LongRecord",
    "MaskedTensor",
    "NormalizationInfo",
    "ParsimonyReport",
    "SimulatedTruth",
    "SimulationConfig",
    "SmoothingOperator",
    "StudyResult",
    "UnidentifiableFiberError",
    "add_noise",
    "apply_random_missing",
    "apply_structured_missing",
    "build_operator",
    "component_effect_curves",
    "component_variance_profile",
    "cv_error",
    "default_core_covariance",
    "default_core_mean",
    "default_initial_l",
    "default_measure_basis",
    "default_temporal_basis",
    "demo_records",
    "denormalize",
    "explained_variance",
    "fit_complete",
    "fit_missing",
    "fit_penalized_components",
    "fold",
    "generate_truth",
    "grid_search",
    "gridify",
    "identify",
    "impute_step",
    "loss_reconstruction",
    "loss_subspace",
    "make_folds",
    "mode_product",
    "objective",
    "parsimony_report",
    "penalty_operator",
    "quality_filter",
    "random_initial_l",
    "read_long_csv",
    "recover_l",
    "restricted_norm_sq",
    "run_study",
    "second_difference_matrix",
    "solve_core",
    "unfold",
    "update_r",
    "update_u",
    "write_demo_csv",
    "write_long_csv",
]
