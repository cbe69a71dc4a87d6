"""Boosted conformal procedure: baselines, cross-validated boosting, calibration."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import conformal
from .conformal import CalibratedQuantile, Intervals
from .contrast_tree import SPLIT_CRITERIA, assign_leaves, contrast_max_deviation
from .data import Dataset, FoldAssignment, SplitIndices, kfold, split, standardize_response
from .gbm import Ensemble, StumpModel, boost_trajectory, fit_gbm, predict
from .losses import (SmoothingParams, coverage_indicators, hard_length_loss, self_calibrated_intervals,
                     smooth_condcov_grad, smooth_length_grad)
from .scores import LocalScoreEval, cqr_score, cqr_to_local, local_score, local_to_cqr


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BoostConfig:
    alpha: float = 0.1
    family: str = "local"
    objective: str = "length"
    k: int = 3
    rounds: int = 500
    learning_rate: float = 0.02
    tau1: float = 50.0
    tau2: float = 50.0
    max_leaves: int = 8
    min_leaf: int | None = None
    split_criterion: str = "balanced"
    gamma: float = 0.5
    seed: int = 0
    baseline_rounds: int = 100
    baseline_learning_rate: float = 0.1
    constant_sigma: bool = False
    init: str = "baseline"
    refit_every: int = 10
    test_fraction: float = 0.2
    standardize: bool = True

    def __post_init__(self):
        checks = [
            (0 < self.alpha < 1, "alpha must lie in (0, 1)"),
            (self.family in ("local", "cqr"), "family must be 'local' or 'cqr'"),
            (self.objective in ("length", "condcov"), "objective must be 'length' or 'condcov'"),
            (self.k >= 2, "k must be >= 2"),
            (self.rounds >= 0, "rounds must be >= 0"),
            (self.learning_rate > 0, "learning_rate must be positive"),
            (self.tau1 > 0 and self.tau2 > 0, "tau1 and tau2 must be positive"),
            (self.max_leaves >= 1, "max_leaves must be >= 1"),
            (self.min_leaf is None or self.min_leaf >= 1, "min_leaf must be >= 1"),
            (self.split_criterion in SPLIT_CRITERIA, f"split_criterion must be one of {SPLIT_CRITERIA}"),
            (0 < self.gamma < 1, "gamma must lie in (0, 1)"),
            (0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer"),
            (self.baseline_rounds >= 0, "baseline_rounds must be >= 0"),
            (self.baseline_learning_rate > 0, "baseline_learning_rate must be positive"),
            (self.init in ("baseline", "zero"), "init must be 'baseline' or 'zero'"),
            (self.refit_every >= 1, "refit_every must be >= 1"),
            (0 < self.test_fraction < 1, "test_fraction must lie in (0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def from_dict(cls, d: dict) -> "BoostConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "BoostConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kw) -> "BoostConfig":
        return dataclasses.replace(self, **kw)

    @property
    def smoothing(self) -> SmoothingParams:
        return SmoothingParams(self.tau1, self.tau2)


def derived_seeds(seed: int, count: int = 4) -> list[int]:
    """Independent child seeds (test split, train/calib split, folds, spare)."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]


# Base score models: predict(X) -> (mu, log_sigma) in the Local parameterization.

@dataclass
class ConstantBase:
    mu: float = 0.0
    log_sigma: float = 0.0

    def predict(self, X):
        n = np.asarray(X).shape[0]
        return np.full(n, self.mu), np.full(n, self.log_sigma)

    def to_dict(self) -> dict:
        return {"kind": "constant", "mu": self.mu, "log_sigma": self.log_sigma}


@dataclass
class LocalBase:
    """Mean model plus MAD model (or a constant scale), floored at ``floor``."""

    mu_model: StumpModel
    sigma_model: StumpModel | None
    sigma_const: float | None
    floor: float

    def sigma(self, X) -> np.ndarray:
        if self.sigma_model is None:
            raw = np.full(np.asarray(X).shape[0], self.sigma_const)
        else:
            raw = self.sigma_model.predict(X)
        return np.maximum(raw, self.floor)

    def predict(self, X):
        return self.mu_model.predict(X), np.log(self.sigma(X))

    def to_dict(self) -> dict:
        return {"kind": "local", "mu_model": self.mu_model.to_dict(),
                "sigma_model": None if self.sigma_model is None else self.sigma_model.to_dict(),
                "sigma_const": self.sigma_const, "floor": self.floor}


@dataclass
class CqrBase:
    """Lower/upper quantile models, reduced to the equivalent Local pair."""

    lo_model: StumpModel
    hi_model: StumpModel
    min_half_width: float

    def quantiles(self, X) -> tuple[np.ndarray, np.ndarray]:
        lo = self.lo_model.predict(X)
        hi = np.maximum(self.hi_model.predict(X), lo)
        return lo, hi

    def band(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Quantile band widened symmetrically to at least ``2 * min_half_width``."""
        lo, hi = self.quantiles(X)
        mid = (lo + hi) / 2
        half = np.maximum((hi - lo) / 2, self.min_half_width)
        narrow = (hi - lo) / 2 < self.min_half_width
        return np.where(narrow, mid - half, lo), np.where(narrow, mid + half, hi)

    def predict(self, X):
        lo, hi = self.band(X)
        mu, sigma = cqr_to_local(lo, hi)
        return mu, np.log(sigma)

    def to_dict(self) -> dict:
        return {"kind": "cqr", "lo_model": self.lo_model.to_dict(), "hi_model": self.hi_model.to_dict(),
                "min_half_width": self.min_half_width}


def fit_baseline_local(train: Dataset, cfg: BoostConfig) -> LocalBase:
    """Squared-error mean model, then a squared-error model of absolute residuals."""
    X, y = train.features, train.response
    mu_model = fit_gbm(X, y, cfg.baseline_rounds, cfg.baseline_learning_rate, "squared")
    resid = np.abs(y - mu_model.predict(X))
    mad = float(np.mean(resid))
    if mad <= 1e-12 * max(1.0, float(np.mean(np.abs(y)))):
        # residuals are zero up to roundoff: constant scale at the absolute floor
        return LocalBase(mu_model, None, 1e-3, 1e-3)
    floor = 1e-3 * mad
    if cfg.constant_sigma:
        return LocalBase(mu_model, None, max(mad, floor), floor)
    sigma_model = fit_gbm(X, resid, cfg.baseline_rounds, cfg.baseline_learning_rate, "squared")
    return LocalBase(mu_model, sigma_model, None, floor)


def fit_baseline_cqr(train: Dataset, alpha: float, cfg: BoostConfig) -> CqrBase:
    """Pinball-loss boosting at levels ``alpha/2`` and ``1 - alpha/2``."""
    X, y = train.features, train.response
    lo = fit_gbm(X, y, cfg.baseline_rounds, cfg.baseline_learning_rate, "pinball", alpha / 2)
    hi = fit_gbm(X, y, cfg.baseline_rounds, cfg.baseline_learning_rate, "pinball", 1 - alpha / 2)
    base = CqrBase(lo, hi, 0.0)
    q_lo, q_hi = base.quantiles(X)
    width = float(np.mean(q_hi - q_lo))
    base.min_half_width = 1e-3 * width / 2 if width > 0 else 1e-3
    return base


def fit_base(train: Dataset, cfg: BoostConfig):
    if cfg.init == "zero":
        return ConstantBase(0.0, 0.0)
    if cfg.family == "cqr":
        return fit_baseline_cqr(train, cfg.alpha, cfg)
    return fit_baseline_local(train, cfg)


# Objectives: a smooth gradient for boosting and a hard loss for round selection.

class LengthObjective:
    name = "length"

    def __init__(self, alpha: float):
        self.alpha = alpha

    def gradient(self, X, y):
        alpha = self.alpha
        return lambda mu, s: smooth_length_grad(mu, s, y, alpha)

    def evaluate(self, X, y, mu, log_sigma) -> float:
        return hard_length_loss(LocalScoreEval(mu, log_sigma), y, self.alpha)


class CondCovGradient:
    """Smooth conditional-coverage gradient with a periodically refit partition.

    The partition comes from a contrast tree on the hard, self-calibrated
    coverage indicators of the current score; it is refit on the first call and
    every ``refit_every`` calls after that, and frozen in between.
    """

    def __init__(self, X, y, alpha, sp, max_leaves, min_leaf, criterion, refit_every):
        self.X, self.y, self.alpha, self.sp = X, y, alpha, sp
        self.max_leaves, self.min_leaf, self.criterion = max_leaves, min_leaf, criterion
        self.refit_every = refit_every
        self.calls = 0
        self.labels = None
        self.refits = 0

    def __call__(self, mu, s):
        if self.calls % self.refit_every == 0:
            e = LocalScoreEval(mu, s)
            covered = coverage_indicators(self_calibrated_intervals(e, self.y, self.alpha), self.y)
            _, tree = contrast_max_deviation(self.X, covered, self.alpha, self.max_leaves,
                                             self.min_leaf, self.criterion)
            self.labels = assign_leaves(tree, self.X)
            self.refits += 1
        self.calls += 1
        return smooth_condcov_grad(mu, s, self.y, self.alpha, self.labels, self.sp)


class CondCovObjective:
    name = "condcov"

    def __init__(self, alpha, sp: SmoothingParams, max_leaves=8, min_leaf=None,
                 criterion="balanced", refit_every=10):
        self.alpha, self.sp = alpha, sp
        self.max_leaves, self.min_leaf, self.criterion = max_leaves, min_leaf, criterion
        self.refit_every = refit_every
        self.notes: list[str] = []

    def gradient(self, X, y):
        return CondCovGradient(X, y, self.alpha, self.sp, self.max_leaves, self.min_leaf,
                               self.criterion, self.refit_every)

    def evaluate(self, X, y, mu, log_sigma) -> float:
        covered = coverage_indicators(self_calibrated_intervals(LocalScoreEval(mu, log_sigma), y, self.alpha), y)
        value, tree = contrast_max_deviation(X, covered, self.alpha, self.max_leaves, self.min_leaf,
                                             self.criterion)
        for note in tree.notes:
            if note not in self.notes:
                self.notes.append(note)
        return value


def make_objective(cfg: BoostConfig):
    if cfg.objective == "length":
        return LengthObjective(cfg.alpha)
    return CondCovObjective(cfg.alpha, cfg.smoothing, cfg.max_leaves, cfg.min_leaf,
                            cfg.split_criterion, cfg.refit_every)


# Algorithm: k-fold round selection, then the final boost on all training rows.

def select_tau(cv_curve) -> int:
    """Round minimizing the fold-summed loss; the earliest round wins ties."""
    totals = np.sum(np.asarray(cv_curve, dtype=float), axis=0)
    return int(np.argmin(totals))


def select_rounds_cv(train: Dataset, base, objective, cfg: BoostConfig,
                     folds: FoldAssignment | None = None) -> tuple[int, np.ndarray]:
    """Per fold: boost ``cfg.rounds`` rounds on the other folds and score every
    round with the objective's hard loss on the held-out fold."""
    X, y = train.features, train.response
    if folds is None:
        folds = kfold(np.arange(train.n), cfg.k, derived_seeds(cfg.seed)[2])
    curve = np.empty((folds.k, cfg.rounds + 1))
    for j in range(folds.k):
        hold = folds.fold_of == j
        Xs, ys = X[~hold], y[~hold]
        Xh, yh = X[hold], y[hold]
        mu0, s0 = base.predict(Xs)
        traj = boost_trajectory(Xs, mu0, s0, objective.gradient(Xs, ys), cfg.rounds, cfg.learning_rate,
                                base=base)
        hmu, hs = base.predict(Xh)
        for t, (mu_t, s_t) in enumerate(traj.ensemble.staged(Xh, hmu, hs)):
            curve[j, t] = objective.evaluate(Xh, yh, mu_t, s_t)
    return select_tau(curve), curve


@dataclass
class BoostedScore:
    family: str
    base: object
    ensemble: Ensemble
    selected_rounds: int
    cv_curve: np.ndarray
    notes: list[str] = field(default_factory=list)

    def local_pair(self, X, rounds: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        ens = self.ensemble if rounds is None else self.ensemble.truncate(rounds)
        return predict(ens, X)

    def score_eval(self, X, rounds: int | None = None):
        mu, s = self.local_pair(X, rounds)
        if self.family == "cqr":
            return local_to_cqr(mu, s)
        return LocalScoreEval(mu, s)

    def scores(self, X, y, rounds: int | None = None) -> np.ndarray:
        e = self.score_eval(X, rounds)
        if self.family == "cqr":
            return cqr_score(e, y)
        return local_score(e, y)

    def to_dict(self) -> dict:
        return {"family": self.family, "selected_rounds": self.selected_rounds,
                "cv_curve": self.cv_curve.tolist(), "ensemble": self.ensemble.to_dict(),
                "notes": list(self.notes)}


def boost_stage(train: Dataset, cfg: BoostConfig) -> BoostedScore:
    """Fit the base score, choose the round count by k-fold CV and boost.

    Only the training rows are passed in, so calibration and test data cannot
    influence the learned score.
    """
    base = fit_base(train, cfg)
    objective = make_objective(cfg)
    folds = kfold(np.arange(train.n), cfg.k, derived_seeds(cfg.seed)[2])
    if cfg.rounds > 0:
        tau, curve = select_rounds_cv(train, base, objective, cfg, folds)
    else:
        tau, curve = 0, np.zeros((cfg.k, 1))
    mu0, s0 = base.predict(train.features)
    traj = boost_trajectory(train.features, mu0, s0, objective.gradient(train.features, train.response),
                            tau, cfg.learning_rate, base=base)
    notes = list(getattr(objective, "notes", []))
    return BoostedScore(cfg.family, base, traj.ensemble, tau, curve, notes)


@dataclass
class BoostedConformal:
    """Fitted procedure: boosted score, calibrated quantiles, response scale."""

    config: BoostConfig
    score: BoostedScore
    quantile: CalibratedQuantile
    baseline_quantile: CalibratedQuantile
    scale: float
    split: SplitIndices

    def intervals(self, X, which: str = "boosted") -> Intervals:
        """Prediction intervals in original response units."""
        if which == "boosted":
            rounds, q = None, self.quantile
        elif which == "baseline":
            rounds, q = 0, self.baseline_quantile
        else:
            raise ValueError("which must be 'boosted' or 'baseline'")
        e = self.score.score_eval(X, rounds)
        return conformal.intervals_for(e, q).scaled(self.scale)


def boosted_conformal(ds: Dataset, cfg: BoostConfig) -> BoostedConformal:
    """Split, boost on the training part, calibrate on the calibration part."""
    seeds = derived_seeds(cfg.seed)
    idx = split(ds.n, cfg.gamma, seeds[1])
    scale = 1.0
    if cfg.standardize:
        ds, scale = standardize_response(ds, idx.train)
    train, calib = ds.subset(idx.train), ds.subset(idx.calib)
    score = boost_stage(train, cfg)
    q = conformal.calibrate(score.scores(calib.features, calib.response), cfg.alpha)
    q0 = conformal.calibrate(score.scores(calib.features, calib.response, rounds=0), cfg.alpha)
    return BoostedConformal(cfg, score, q, q0, scale, idx)


def holdout_split(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``(rest, test)`` index arrays with ``round(test_fraction * n)`` test rows."""
    n_test = int(math.floor(test_fraction * n + 0.5))
    if n_test < 1 or n_test > n - 2:
        raise ConfigError(f"test_fraction={test_fraction} with n={n} leaves no usable split")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])
