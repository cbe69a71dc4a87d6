"""Split-conformal calibration and interval construction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scores import CqrScoreEval, LocalScoreEval, score


@dataclass(frozen=True)
class CalibratedQuantile:
    value: float
    alpha: float
    n_calib: int

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)


@dataclass(frozen=True)
class Intervals:
    """Closed prediction intervals, one per row."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in shape")
        if np.any(lo > hi):
            raise ValueError("interval with lower > upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def __len__(self) -> int:
        return len(self.lower)

    @property
    def length(self) -> np.ndarray:
        return self.upper - self.lower

    def scaled(self, factor: float) -> "Intervals":
        return Intervals(self.lower * factor, self.upper * factor)


def order_index(n: int, alpha: float) -> int:
    """1-based order statistic ``ceil((1 - alpha)(n + 1))``."""
    # the 1e-9 slack keeps products like 0.95 * 20 from rounding up past an integer
    return math.ceil((1 - alpha) * (n + 1) - 1e-9)


def empirical_quantile(scores, alpha: float) -> CalibratedQuantile:
    """Upper ``1 - alpha`` quantile of the scores augmented with a point mass at +inf."""
    z = np.asarray(scores, dtype=float).ravel()
    if z.size == 0:
        raise ValueError("empirical_quantile needs at least one score")
    if not np.isfinite(z).all():
        raise ValueError("scores must be finite")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    k = order_index(z.size, alpha)
    if k > z.size:
        return CalibratedQuantile(math.inf, alpha, z.size)
    return CalibratedQuantile(float(np.partition(z, k - 1)[k - 1]), alpha, z.size)


def calibrate(calib_scores, alpha: float) -> CalibratedQuantile:
    return empirical_quantile(calib_scores, alpha)


def interval_local(mu, sigma, q: CalibratedQuantile | float) -> Intervals:
    qv = q.value if isinstance(q, CalibratedQuantile) else float(q)
    mu = np.asarray(mu, dtype=float)
    if math.isinf(qv):
        return Intervals(np.full(mu.shape, -np.inf), np.full(mu.shape, np.inf))
    sigma = np.asarray(sigma, dtype=float)
    return Intervals(mu - qv * sigma, mu + qv * sigma)


def interval_cqr(e: CqrScoreEval, q: CalibratedQuantile | float) -> Intervals:
    qv = q.value if isinstance(q, CalibratedQuantile) else float(q)
    if math.isinf(qv):
        shape = np.shape(e.mu1)
        return Intervals(np.full(shape, -np.inf), np.full(shape, np.inf))
    return Intervals(e.mu1 - e.sigma * qv, e.mu2 + e.sigma * qv)


def intervals_for(e: LocalScoreEval | CqrScoreEval, q: CalibratedQuantile | float) -> Intervals:
    if isinstance(e, LocalScoreEval):
        return interval_local(e.mu, e.sigma, q)
    return interval_cqr(e, q)


def split_conformal(calib_eval, y_calib, test_eval, alpha: float) -> tuple[CalibratedQuantile, Intervals]:
    """Calibrate on ``(calib_eval, y_calib)`` and build intervals for ``test_eval``."""
    q = calibrate(score(calib_eval, y_calib), alpha)
    return q, intervals_for(test_eval, q)
