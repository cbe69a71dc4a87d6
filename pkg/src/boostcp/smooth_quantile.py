"""Harrell-Davis smooth quantile estimator with gradients.

The estimator is ``sum_i W[r, i] * z_(i)`` where ``W`` are Beta-CDF increments
over the cells ``[(i-1)/r, i/r]``.  Its derivative with respect to ``z_j`` is
the weight attached to the rank of ``z_j``; ranks come from a stable sort, so
tied entries receive the weights of consecutive ranks in input order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import lgamma

import numpy as np

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000


def _betacf(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _MAX_ITER + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        am, bm, xm = a[idx], b[idx], x[idx]
        cm, dm, hm = c[idx], d[idx], h[idx]
        m2 = 2 * m
        aa = m * (bm - m) * xm / ((qam[idx] + m2) * (am + m2))
        dm = 1.0 + aa * dm
        dm = np.where(np.abs(dm) < _TINY, _TINY, dm)
        cm = 1.0 + aa / cm
        cm = np.where(np.abs(cm) < _TINY, _TINY, cm)
        dm = 1.0 / dm
        hm = hm * dm * cm
        aa = -(am + m) * (qab[idx] + m) * xm / ((am + m2) * (qap[idx] + m2))
        dm = 1.0 + aa * dm
        dm = np.where(np.abs(dm) < _TINY, _TINY, dm)
        cm = 1.0 + aa / cm
        cm = np.where(np.abs(cm) < _TINY, _TINY, cm)
        dm = 1.0 / dm
        delta = dm * cm
        hm = hm * delta
        c[idx], d[idx], h[idx] = cm, dm, hm
        active[idx] = np.abs(delta - 1.0) > _EPS
    else:
        raise RuntimeError("incomplete beta continued fraction did not converge")
    return h


def reg_incomplete_beta(a, b, x):
    """Regularized incomplete beta function ``I_x(a, b)``.

    Accepts scalars or arrays (broadcast together). Uses the continued fraction
    directly for ``x < (a + 1) / (a + b + 2)`` and the symmetry
    ``I_x(a, b) = 1 - I_{1-x}(b, a)`` otherwise.
    """
    a_arr, b_arr, x_arr = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, x)))
    scalar = a_arr.ndim == 0
    a_arr, b_arr, x_arr = (np.atleast_1d(v).ravel().copy() for v in (a_arr, b_arr, x_arr))
    if np.any(a_arr <= 0) or np.any(b_arr <= 0):
        raise ValueError("reg_incomplete_beta requires a > 0 and b > 0")
    if np.any((x_arr < 0) | (x_arr > 1)) or np.any(np.isnan(x_arr)):
        raise ValueError("reg_incomplete_beta requires 0 <= x <= 1")

    out = np.empty_like(x_arr)
    out[x_arr == 0] = 0.0
    out[x_arr == 1] = 1.0
    inner = (x_arr > 0) & (x_arr < 1)
    if inner.any():
        ai, bi, xi = a_arr[inner], b_arr[inner], x_arr[inner]
        lbeta = np.array([lgamma(p + q) - lgamma(p) - lgamma(q) for p, q in zip(ai, bi)])
        front = np.exp(lbeta + ai * np.log(xi) + bi * np.log1p(-xi))
        direct = xi < (ai + 1.0) / (ai + bi + 2.0)
        val = np.empty_like(xi)
        if direct.any():
            val[direct] = front[direct] * _betacf(ai[direct], bi[direct], xi[direct]) / ai[direct]
        flip = ~direct
        if flip.any():
            val[flip] = 1.0 - front[flip] * _betacf(bi[flip], ai[flip], 1.0 - xi[flip]) / bi[flip]
        out[inner] = np.clip(val, 0.0, 1.0)
    if scalar:
        return float(out[0])
    return out.reshape(np.broadcast(np.asarray(a), np.asarray(b), np.asarray(x)).shape)


@dataclass(frozen=True)
class HdWeights:
    weights: np.ndarray
    r: int
    alpha: float


@lru_cache(maxsize=256)
def _hd_weights_cached(r: int, alpha: float) -> np.ndarray:
    a = (1 - alpha) * (r + 1)
    b = alpha * (r + 1)
    grid = np.arange(r + 1, dtype=float) / r
    cdf = reg_incomplete_beta(np.full(r + 1, a), np.full(r + 1, b), grid)
    w = np.diff(cdf)
    w = np.maximum(w, 0.0)
    w.setflags(write=False)
    return w


def hd_weights(r: int, alpha: float) -> HdWeights:
    """Harrell-Davis weights for the ``1 - alpha`` quantile of ``r`` order statistics."""
    if r < 1:
        raise ValueError(f"need r >= 1, got {r}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return HdWeights(_hd_weights_cached(int(r), float(alpha)), int(r), float(alpha))


@dataclass(frozen=True)
class SmoothQuantileResult:
    value: float
    grad: np.ndarray


def smooth_quantile(z, alpha: float) -> SmoothQuantileResult:
    """Smooth ``1 - alpha`` quantile of ``z`` and its gradient in input order."""
    z = np.asarray(z, dtype=float).ravel()
    if z.size == 0:
        raise ValueError("smooth_quantile needs a non-empty input")
    if not np.isfinite(z).all():
        raise ValueError("smooth_quantile input must be finite")
    w = hd_weights(z.size, alpha).weights
    order = np.argsort(z, kind="stable")
    grad = np.empty_like(z)
    grad[order] = w
    value = float(np.sum(w * z[order]))
    return SmoothQuantileResult(value, grad)
