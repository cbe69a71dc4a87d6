"""Interval-quality losses and smooth surrogates with analytic gradients.

Smooth losses are functions of per-sample Local-family components
``(mu_i, s_i)`` with ``sigma_i = exp(s_i)``.  The conformal quantile inside
them is the Harrell-Davis smooth quantile of the scores of the same data,
so every sample's score feeds every interval through that quantile; the
gradients below include this coupling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .conformal import Intervals, empirical_quantile, intervals_for
from .contrast_tree import contrast_max_deviation, group_deviation
from .scores import CqrScoreEval, LocalScoreEval, score
from .smooth_quantile import smooth_quantile


@dataclass(frozen=True)
class LossGrad:
    loss: float
    d_mu: np.ndarray
    d_log_sigma: np.ndarray


@dataclass(frozen=True)
class SmoothingParams:
    tau1: float = 50.0
    tau2: float = 50.0

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ValueError("smoothing parameters must be positive")


def length_loss(intervals: Intervals) -> float:
    """Average interval length."""
    bad = np.nonzero(~np.isfinite(intervals.length))[0]
    if bad.size:
        raise ValueError(f"infinite intervals at rows {bad[:10].tolist()} (count {bad.size})")
    return float(np.mean(intervals.length))


def coverage_indicators(intervals: Intervals, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return ((intervals.lower <= y) & (y <= intervals.upper)).astype(float)


def _prepare(mu, log_sigma, y):
    mu = np.asarray(mu, dtype=float)
    s = np.asarray(log_sigma, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (mu.shape == s.shape == y.shape) or mu.ndim != 1 or mu.size == 0:
        raise ValueError("mu, log_sigma and y must be equal-length non-empty vectors")
    return mu, s, y


def smooth_length_grad(mu, log_sigma, y, alpha: float) -> LossGrad:
    """``2 * mean(sigma) * Q^s(E)`` with ``E_i = |y_i - mu_i| / sigma_i``."""
    mu, s, y = _prepare(mu, log_sigma, y)
    n = mu.size
    sigma = np.exp(s)
    resid = y - mu
    E = np.abs(resid) / sigma
    sq = smooth_quantile(E, alpha)
    sbar = float(np.mean(sigma))
    loss = 2.0 * sbar * sq.value
    d_mu = -2.0 * sbar * sq.grad * np.sign(resid) / sigma
    d_s = 2.0 * sigma * sq.value / n - 2.0 * sbar * sq.grad * E
    return LossGrad(loss, d_mu, d_s)


def smooth_condcov_grad(mu, log_sigma, y, alpha: float, leaf_labels,
                        sp: SmoothingParams = SmoothingParams()) -> LossGrad:
    """Log-sum-exp over parts of the smoothed absolute coverage deviation."""
    mu, s, y = _prepare(mu, log_sigma, y)
    labels = np.asarray(leaf_labels)
    if labels.shape != mu.shape:
        raise ValueError("leaf_labels must label every sample")
    parts, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if np.any(counts == 0):
        raise ValueError("empty part in partition")
    tau1, tau2 = sp.tau1, sp.tau2
    target = 1 - alpha

    sigma = np.exp(s)
    resid = y - mu
    E = np.abs(resid) / sigma
    sq = smooth_quantile(E, alpha)
    Q = sq.value
    upper = mu + Q * sigma
    lower = mu - Q * sigma
    a = expit(tau1 * (upper - y))
    b = expit(tau1 * (y - lower))
    c = a * b

    p = np.bincount(inverse, weights=c, minlength=parts.size) / counts
    dev = np.abs(p - target)
    loss = float(logsumexp(tau2 * dev) / tau2)
    pi = softmax(tau2 * dev)

    # dL/dc_j
    w = (pi * np.sign(p - target) / counts)[inverse]
    dc_du = tau1 * a * (1 - a) * b
    dc_dl = -tau1 * b * (1 - b) * a
    A = w * dc_du
    B = w * dc_dl
    dL_dQ = float(np.sum((A - B) * sigma))

    d_mu = A + B - dL_dQ * sq.grad * np.sign(resid) / sigma
    d_s = (A - B) * Q * sigma - dL_dQ * sq.grad * E
    return LossGrad(loss, d_mu, d_s)


def self_calibrated_intervals(e: LocalScoreEval | CqrScoreEval, y, alpha: float) -> Intervals:
    """Intervals whose quantile is calibrated on the same ``(e, y)`` they cover."""
    q = empirical_quantile(score(e, y), alpha)
    return intervals_for(e, q)


def hard_length_loss(e: LocalScoreEval | CqrScoreEval, y, alpha: float) -> float:
    return length_loss(self_calibrated_intervals(e, y, alpha))


def hard_condcov_loss(X, e: LocalScoreEval | CqrScoreEval, y, alpha: float, max_leaves: int = 8,
                      min_leaf: int | None = None, criterion: str = "balanced") -> float:
    """Contrast-tree maximum coverage deviation of self-calibrated intervals."""
    covered = coverage_indicators(self_calibrated_intervals(e, y, alpha), y)
    value, _ = contrast_max_deviation(X, covered, alpha, max_leaves, min_leaf, criterion)
    return value


def group_condcov_loss(covered, groups: Sequence, alpha: float) -> float:
    """Maximum coverage deviation over predefined index groups."""
    if len(groups) == 0:
        raise ValueError("need at least one group")
    return max(group_deviation(covered, g, alpha) for g in groups)


LabelGroup = tuple[float, float] | Callable[[np.ndarray], np.ndarray]


def _group_mask(group: LabelGroup, y: np.ndarray) -> np.ndarray:
    if callable(group):
        return np.asarray(group(y), dtype=bool)
    lo, hi = group
    return (y >= lo) & (y <= hi)


def group_length_loss(intervals: Intervals, y, label_groups: Sequence[LabelGroup], weights) -> float:
    """Weighted sum of mean lengths within response-range groups.

    A group is a closed ``(low, high)`` range or a predicate on ``y``.  Groups
    with no members contribute zero.
    """
    y = np.asarray(y, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(label_groups),):
        raise ValueError("one weight per label group required")
    lengths = intervals.length
    total = 0.0
    for group, wt in zip(label_groups, weights):
        mask = _group_mask(group, y)
        if mask.any():
            total += wt * float(np.mean(lengths[mask]))
    return total
