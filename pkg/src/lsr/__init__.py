"""Robust label-shift estimation from contaminated source collections.

Estimates a target domain's class proportions from several labeled source
datasets when an unknown minority of them is corrupted, by minimizing
robustly weighted kernel two-sample objectives over the probability
simplex, and fits an importance-calibrated linear classifier on top of
the estimate. Includes a seeded simulation and benchmark harness plus
figure rendering for its results.
"""

from .bench import (
    ESTIMATOR_NAMES,
    ExperimentGrid,
    RESULTS_HEADER,
    fsn_metric,
    load_results_csv,
    misclassification_error,
    mse_metric,
    run_experiment_grid,
    weighting_config_for,
    write_results_csv,
)
from .classifier import (
    ClassifierParams,
    importance_weights,
    load_classifier,
    predict_labels,
    save_classifier,
    source_label_proportions,
    source_risk,
    train_calibrated_classifier,
)
from .datasets import (
    LabeledDataset,
    UnlabeledDataset,
    load_csv_labeled,
    load_csv_unlabeled,
    write_labeled_csv,
    write_unlabeled_csv,
)
from .errors import (
    DegenerateSourceError,
    DivisionGuardError,
    EstimationError,
    NumericalError,
    ParseError,
    SchemaError,
)
from .kernels import (
    KernelSpec,
    MmdQuadratic,
    fit_mmd_terms,
    kernel_eval,
    median_heuristic_bandwidth,
    mmd_gradient,
    mmd_loss,
)
from .simplex import (
    EstimationResult,
    OptimizerConfig,
    baseline_estimate,
    project_simplex,
    rod_estimate,
    roe_estimate,
    roe_multistep,
    solve_weighted,
)
from .simulate import (
    ContaminationPlan,
    MixtureSpec,
    SourceProportionLaw,
    contaminate,
    default_mixture,
    generate_sources,
)
from .weighting import (
    RobustWeights,
    WeightingConfig,
    median_of_means_weights,
    mwv_weights,
    robust_mean,
    robust_weights,
    trimmed_weights,
    truncated_weights,
)

__all__ = [
    "ClassifierParams",
    "ContaminationPlan",
    "DegenerateSourceError",
    "DivisionGuardError",
    "ESTIMATOR_NAMES",
    "EstimationError",
    "EstimationResult",
    "ExperimentGrid",
    "KernelSpec",
    "LabeledDataset",
    "MixtureSpec",
    "MmdQuadratic",
    "NumericalError",
    "OptimizerConfig",
    "ParseError",
    "RESULTS_HEADER",
    "RobustWeights",
    "SchemaError",
    "SourceProportionLaw",
    "UnlabeledDataset",
    "WeightingConfig",
    "baseline_estimate",
    "contaminate",
    "default_mixture",
    "fit_mmd_terms",
    "fsn_metric",
    "generate_sources",
    "importance_weights",
    "kernel_eval",
    "load_classifier",
    "load_csv_labeled",
    "load_csv_unlabeled",
    "load_results_csv",
    "median_heuristic_bandwidth",
    "median_of_means_weights",
    "misclassification_error",
    "mmd_gradient",
    "mmd_loss",
    "mse_metric",
    "mwv_weights",
    "predict_labels",
    "project_simplex",
    "robust_mean",
    "robust_weights",
    "rod_estimate",
    "roe_estimate",
    "roe_multistep",
    "run_experiment_grid",
    "save_classifier",
    "solve_weighted",
    "source_label_proportions",
    "source_risk",
    "train_calibrated_classifier",
    "trimmed_weights",
    "truncated_weights",
    "weighting_config_for",
    "write_labeled_csv",
    "write_results_csv",
    "write_unlabeled_csv",
]
