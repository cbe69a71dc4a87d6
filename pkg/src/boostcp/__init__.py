"""Boosted conformity scores for split-conformal prediction intervals."""

from .conformal import CalibratedQuantile, Intervals, calibrate, empirical_quantile, split_conformal
from .contrast_tree import ContrastTree, contrast_max_deviation, fit_contrast_tree
from .data import Dataset, DataError, load_csv, save_csv, synth_heteroskedastic
from .pipeline import BoostConfig, BoostedConformal, ConfigError, boosted_conformal
from .report import EvalReport, evaluate, evaluate_intervals, marginal_coverage
from .scores import CqrScoreEval, LocalScoreEval, cqr_to_local, local_to_cqr
from .smooth_quantile import hd_weights, smooth_quantile

__all__ = [
    "BoostConfig", "BoostedConformal", "CalibratedQuantile", "ConfigError", "ContrastTree",
    "CqrScoreEval", "DataError", "Dataset", "EvalReport", "Intervals", "LocalScoreEval",
    "boosted_conformal", "calibrate", "contrast_max_deviation", "cqr_to_local", "empirical_quantile",
    "evaluate", "evaluate_intervals", "fit_contrast_tree", "hd_weights", "load_csv",
    "local_to_cqr", "marginal_coverage", "save_csv", "smooth_quantile", "split_conformal",
    "synth_heteroskedastic",
]

__version__ = "0.1.0"
