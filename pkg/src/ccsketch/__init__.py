"""Compressed Counting: frequency moments of turnstile streams from skewed stable projections."""

from .estimators import (
    EstimateResult,
    EstimatorKind,
    estimate_gm,
    estimate_hm,
    estimate_mle05,
    estimate_op,
    estimate_oq,
    estimate_quantile,
    evaluate,
    gm_denominator,
    g_function,
    kappa,
    optimal_lambda,
    variance_factor,
)
from .sketch import (
    CCSketch,
    ExactSignal,
    StreamParseError,
    TurnstileEvent,
    TurnstileViolation,
    batch_project,
    exact_moment,
    read_stream,
    sketch_merge,
    sketch_new,
    sketch_update,
    write_stream,
)
from .stable import (
    SeededGenerator,
    StableParams,
    project_signal,
    projection_row,
    sample_projection_entry,
    sample_standard,
    scale_to,
    stable_transform,
    trial_seed,
)
from .tables import (
    OQ_TABLE,
    EmpiricalDistribution,
    NoEntryError,
    OqEntry,
    build_empirical,
    derive_qstar,
    derive_variance_factor,
    derive_wq,
    lookup,
)

__version__ = "0.1.0"
