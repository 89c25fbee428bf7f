"""Controlled 1D testbed for when a classification loss helps regression
under imbalanced data sampling."""

from .binning import (
    ClassScheme,
    assign_class,
    assign_classes,
    bernoulli_keep,
    build_class_scheme,
    equalize,
    keep_probabilities,
    uniform_bins,
)
from .harness import (
    GridConfig,
    Mode,
    TrialResult,
    TrialSpec,
    ablate_noise,
    desk_scale_config,
    export_plotdata,
    gap_metric,
    helps_percentage,
    lambda_search,
    load_grid_config,
    load_records,
    paper_scale_config,
    plan_grid,
    run_grid,
    run_trial,
    summarize_records,
    write_summary,
)
from .losses import (
    LossBreakdown,
    combined_loss,
    log_softmax,
    mse,
    nll_gap_diagnostic,
    softmax,
    softmax_cross_entropy,
)
from .model import (
    Gradients,
    ModelState,
    RegressionView,
    TrainConfig,
    adam_step,
    backward,
    forward,
    init_model,
    loss_and_gradients,
    predict,
    regression_view,
    train_model,
)
from .sampling import (
    Kind,
    OodRegions,
    Regime,
    SamplingSpec,
    ScenarioSpec,
    Split,
    SplitDataset,
    UnreachablePeakError,
    build_dataset,
    build_ood_dataset,
    export_xy,
)
from .synth import (
    FunctionParams,
    RejectionBudgetError,
    evaluate,
    grid_max_abs,
    grid_range,
    sample_function,
)

__version__ = "0.1.0"
