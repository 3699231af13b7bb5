"""Multivariate temporal point processes with partially interval-censored
dimensions: simulation, likelihood fitting, forecasting, and diagnostics.

The model family interpolates between a fully observed self-exciting
(Hawkes) process and a fully mean-field counting process: the first e of
d dimensions enter the dynamics through their expected intensity (so only
interval counts of them are needed), while the remaining dimensions
contribute through their exact event times.
"""

from .engine import (
    ConvGrid,
    HTables,
    compensator_eval,
    compute_h,
    conv_quadrature,
    default_grid,
    default_step,
    xi_eval,
    xi_monte_carlo,
)
from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    EvaluationError,
    ExplosionError,
    InsufficientDataError,
    NumericalConsistencyError,
    ParameterError,
    PMBPError,
    RegularityError,
    TruncationError,
)
from .closed_form import closed_form_pmbp21
from .fitting import (
    FitConfig,
    FitResult,
    StartRecord,
    fit,
    recovery_experiment,
)
from .gof import GofReport, fit_score, gof_anscombe, gof_report, gof_time_rescaling
from .gradients import GradTables, fd_gradient, grad_h, kernel_keys
from .hawkes import (
    hawkes_compensator,
    hawkes_intensity,
    pp_loglik,
    sample_conditional_hawkes,
    sample_hawkes,
)
from .io import (
    censor,
    format_float,
    read_csv,
    read_dataset,
    read_events,
    write_csv,
    write_dataset,
    write_events,
)
from .likelihood import (
    LikelihoodConfig,
    grad_nll,
    icll,
    joint_nll,
    nll_and_grad,
    ppll_nll,
    total_nll,
)
from .params import (
    CensoredSeries,
    Dataset,
    EventHistory,
    ModelParams,
    RegularityReport,
    censor_series,
    check_subcriticality,
    phi_eval,
    phi_integral,
    spectral_radius,
)
from .paramvec import n_free, pack, unpack
from .poi import PoiEvaluator, PoiValues
from .sampling import (
    BoundContext,
    Prediction,
    SampleStats,
    build_bound_context,
    pmbp_upper_bound,
    predict_counts,
    predict_counts_sampled,
    sample_pmbp,
)

__version__ = "0.1.0"

__all__ = [
    "BoundContext",
    "CensoredSeries",
    "ConvGrid",
    "ConvergenceError",
    "Dataset",
    "DimensionError",
    "DomainError",
    "EvaluationError",
    "EventHistory",
    "ExplosionError",
    "FitConfig",
    "FitResult",
    "GofReport",
    "GradTables",
    "HTables",
    "InsufficientDataError",
    "LikelihoodConfig",
    "ModelParams",
    "NumericalConsistencyError",
    "PMBPError",
    "ParameterError",
    "PoiEvaluator",
    "PoiValues",
    "Prediction",
    "RegularityError",
    "RegularityReport",
    "SampleStats",
    "StartRecord",
    "TruncationError",
    "build_bound_context",
    "censor",
    "censor_series",
    "check_subcriticality",
    "closed_form_pmbp21",
    "compensator_eval",
    "compute_h",
    "conv_quadrature",
    "default_grid",
    "default_step",
    "fd_gradient",
    "fit",
    "fit_score",
    "format_float",
    "gof_anscombe",
    "gof_report",
    "gof_time_rescaling",
    "grad_h",
    "grad_nll",
    "hawkes_compensator",
    "hawkes_intensity",
    "icll",
    "joint_nll",
    "kernel_keys",
    "n_free",
    "nll_and_grad",
    "pack",
    "phi_eval",
    "phi_integral",
    "pmbp_upper_bound",
    "pp_loglik",
    "ppll_nll",
    "predict_counts",
    "predict_counts_sampled",
    "read_csv",
    "read_dataset",
    "read_events",
    "recovery_experiment",
    "sample_conditional_hawkes",
    "sample_hawkes",
    "sample_pmbp",
    "spectral_radius",
    "total_nll",
    "unpack",
    "write_csv",
    "write_dataset",
    "write_events",
    "xi_eval",
    "xi_monte_carlo",
]
