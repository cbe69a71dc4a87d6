"""Generalized conformity scores.

Two parameterizations are supported:

* Local family: ``|y - mu(x)| / sigma(x)`` with ``sigma`` carried as ``log_sigma``.
* CQR-type family: ``max(mu1(x) - y, y - mu2(x)) / sigma(x)`` with ``mu1 <= mu2``.

All functions broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LocalScoreEval:
    mu: np.ndarray
    log_sigma: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)


@dataclass(frozen=True)
class CqrScoreEval:
    mu1: np.ndarray
    mu2: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.mu1) > np.asarray(self.mu2)):
            raise ValueError("CQR score requires mu1 <= mu2")
        if np.any(np.asarray(self.sigma) <= 0):
            raise ValueError("CQR score requires sigma > 0")


def local_score(e: LocalScoreEval, y) -> np.ndarray:
    return np.abs(np.asarray(y, dtype=float) - e.mu) / e.sigma


def cqr_score(e: CqrScoreEval, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return np.maximum(e.mu1 - y, y - e.mu2) / e.sigma


def score(e: LocalScoreEval | CqrScoreEval, y) -> np.ndarray:
    if isinstance(e, LocalScoreEval):
        return local_score(e, y)
    return cqr_score(e, y)


def cqr_to_local(mu1, mu2) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint and half-width of a quantile band.

    The resulting Local score equals ``2 * E_r + 1`` where ``E_r`` is the
    width-normalized CQR score, so both induce the same conformal intervals.
    """
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    if np.any(mu1 >= mu2):
        raise ValueError("cqr_to_local requires mu1 < mu2 everywhere")
    return (mu1 + mu2) / 2, (mu2 - mu1) / 2


def local_to_cqr(mu, log_sigma) -> CqrScoreEval:
    mu = np.asarray(mu, dtype=float)
    sigma = np.exp(np.asarray(log_sigma, dtype=float))
    return CqrScoreEval(mu - sigma, mu + sigma, 2 * sigma)


def cqr_r_eval(q_lo, q_hi) -> CqrScoreEval:
    """CQR-r triple: fitted quantiles scaled by their own width."""
    q_lo = np.asarray(q_lo, dtype=float)
    q_hi = np.asarray(q_hi, dtype=float)
    return CqrScoreEval(q_lo, q_hi, q_hi - q_lo)
