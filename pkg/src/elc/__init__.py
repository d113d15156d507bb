"""Frame delivery ratio prediction with EMA filters and EMA linear combinations."""

__version__ = "0.1.0"

from .filters import ElcModel, EmaState, bank_run, combine, ema_run, ema_step, predict_series
from .metrics import ErrorReport, TargetSeries, compute_targets, error_series, mse, summarize
from .synth import FdrProfile, GilbertElliottParams, gen_from_profile, gen_gilbert_elliott
from .trace import OutcomeTrace, load_trace, save_trace, slice_trace
from .training import (AlphaSequence, GramSystem, LambdaSolution, TrainConfig, build_gram,
                       build_starting_sequence, evaluate, fit_alpha_star, fit_elc,
                       minimize_lambda, select_final, train_elc)

__all__ = [
    "AlphaSequence", "ElcModel", "EmaState", "ErrorReport", "FdrProfile", "GilbertElliottParams",
    "GramSystem", "LambdaSolution", "OutcomeTrace", "TargetSeries", "TrainConfig", "bank_run",
    "build_gram", "build_starting_sequence", "combine", "compute_targets", "ema_run", "ema_step",
    "error_series", "evaluate", "fit_alpha_star", "fit_elc", "gen_from_profile",
    "gen_gilbert_elliott", "load_trace", "minimize_lambda", "mse", "predict_series",
    "save_trace", "select_final", "slice_trace", "summarize", "train_elc",
]
