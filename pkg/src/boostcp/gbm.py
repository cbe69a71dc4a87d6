"""First-order gradient boosting with depth-1 trees.

Two flavours share the stump fitter:

* :class:`StumpModel` / :func:`fit_gbm` - one output, used for baseline
  regressors (squared error, pinball).
* :class:`Ensemble` / :func:`boost_trajectory` - two outputs ``(mu, log_sigma)``
  advanced together, one stump each per round, from caller-supplied
  loss gradients.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .contrast_tree import N_CUTS, candidate_cuts


class BoostingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    left_value: float
    right_value: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(X[:, self.feature] <= self.threshold, self.left_value, self.right_value)

    def to_dict(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold,
                "left_value": self.left_value, "right_value": self.right_value}

    @classmethod
    def from_dict(cls, d: dict) -> "Stump":
        return cls(int(d["feature"]), float(d["threshold"]), float(d["left_value"]),
                   float(d["right_value"]))


class SplitGrid:
    """Per-feature sort orders and candidate cuts, computed once per design matrix."""

    def __init__(self, X, n_cuts: int = N_CUTS):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("SplitGrid needs a non-empty 2-d design matrix")
        self.X = X
        self.n, self.p = X.shape
        self.orders = []
        self.cuts = []
        self.n_left = []
        for f in range(self.p):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            cuts = candidate_cuts(xs, n_cuts)
            nl = np.searchsorted(xs, cuts, side="right")
            self.orders.append(order)
            self.cuts.append(cuts)
            self.n_left.append(nl)


def fit_stump(X, targets, grid: SplitGrid | None = None) -> Stump:
    """Least-squares stump on the quantile cut grid.

    Leaf values are the target means on each side.  Ties in the SSE reduction
    go to the lower feature index, then the lower threshold.  Without any valid
    cut the stump sends every row right (threshold ``-inf``) with the global mean.
    """
    if grid is None:
        grid = SplitGrid(X)
    t = np.asarray(targets, dtype=float)
    if t.shape != (grid.n,):
        raise ValueError("targets must have one entry per row")
    if not np.isfinite(t).all():
        raise ValueError("targets must be finite")
    n = grid.n
    total = float(np.sum(t))
    best_gain, best_f, best_thr = -np.inf, -1, -np.inf
    for f in range(grid.p):
        nl = grid.n_left[f]
        if nl.size == 0:
            continue
        cs = np.cumsum(t[grid.orders[f]])
        sl = cs[nl - 1]
        sr = total - sl
        nr = n - nl
        gain = sl * sl / nl + sr * sr / nr
        i = int(np.argmax(gain))
        if gain[i] > best_gain:
            best_gain, best_f, best_thr = float(gain[i]), f, float(grid.cuts[f][i])
    if best_f < 0:
        m = float(np.mean(t))
        return Stump(0, -math.inf, m, m)
    left = grid.X[:, best_f] <= best_thr
    return Stump(best_f, best_thr, float(np.mean(t[left])), float(np.mean(t[~left])))


def _refit_leaves(stump: Stump, X, values: np.ndarray, leaf_fn) -> Stump:
    left = X[:, stump.feature] <= stump.threshold
    lv = float(leaf_fn(values[left])) if left.any() else stump.left_value
    rv = float(leaf_fn(values[~left])) if (~left).any() else stump.right_value
    return Stump(stump.feature, stump.threshold, lv, rv)


@dataclass
class StumpModel:
    """Single-output additive model ``base + lr * sum(stumps)``."""

    base: float
    stumps: list[Stump]
    learning_rate: float

    def predict(self, X, rounds: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.base)
        for st in self.stumps[:rounds]:
            out = out + self.learning_rate * st.predict(X)
        return out

    def to_dict(self) -> dict:
        return {"base": self.base, "learning_rate": self.learning_rate,
                "stumps": [s.to_dict() for s in self.stumps]}

    @classmethod
    def from_dict(cls, d: dict) -> "StumpModel":
        return cls(float(d["base"]), [Stump.from_dict(s) for s in d["stumps"]],
                   float(d["learning_rate"]))


def fit_gbm(X, y, rounds: int, learning_rate: float, loss: str = "squared",
            quantile: float = 0.5) -> StumpModel:
    """Stump boosting for squared error or pinball loss.

    For the pinball loss the pseudo-residual is ``beta`` where ``y >= f`` and
    ``beta - 1`` elsewhere; each stump's leaf values are then re-estimated as the
    ``beta``-quantile of the current residuals on that side.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if loss == "squared":
        base = float(np.mean(y))
    elif loss == "pinball":
        if not 0 < quantile < 1:
            raise ValueError("quantile level must lie in (0, 1)")
        base = float(np.quantile(y, quantile))
    else:
        raise ValueError(f"unknown loss {loss!r}")
    model = StumpModel(base, [], learning_rate)
    if rounds <= 0:
        return model
    grid = SplitGrid(X)
    pred = np.full(y.shape, base)
    for _ in range(rounds):
        resid = y - pred
        if loss == "squared":
            st = fit_stump(X, resid, grid)
        else:
            pseudo = np.where(resid >= 0, quantile, quantile - 1.0)
            st = fit_stump(X, pseudo, grid)
            st = _refit_leaves(st, X, resid, lambda r: np.quantile(r, quantile))
        model.stumps.append(st)
        pred = pred + learning_rate * st.predict(X)
    return model


@dataclass
class Ensemble:
    """Two-output boosted model on top of a base ``(mu, log_sigma)``.

    ``base`` is any object with ``predict(X) -> (mu, log_sigma)``; it may be
    ``None`` when only increments are needed.
    """

    base: object
    stumps_mu: list[Stump]
    stumps_log_sigma: list[Stump]
    learning_rate: float

    @property
    def rounds(self) -> int:
        return len(self.stumps_mu)

    def truncate(self, t: int) -> "Ensemble":
        if not 0 <= t <= self.rounds:
            raise IndexError(f"round {t} outside 0..{self.rounds}")
        return Ensemble(self.base, self.stumps_mu[:t], self.stumps_log_sigma[:t], self.learning_rate)

    def staged(self, X, mu0, s0):
        """Yield ``(mu, log_sigma)`` after 0, 1, ..., ``rounds`` stumps."""
        X = np.asarray(X, dtype=float)
        mu, s = np.asarray(mu0, dtype=float), np.asarray(s0, dtype=float)
        yield mu, s
        for sm, ss in zip(self.stumps_mu, self.stumps_log_sigma):
            mu = mu + self.learning_rate * sm.predict(X)
            s = s + self.learning_rate * ss.predict(X)
            yield mu, s

    def to_dict(self) -> dict:
        base = self.base.to_dict() if hasattr(self.base, "to_dict") else None
        return {"learning_rate": self.learning_rate, "base": base,
                "stumps_mu": [s.to_dict() for s in self.stumps_mu],
                "stumps_log_sigma": [s.to_dict() for s in self.stumps_log_sigma]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def predict(ens: Ensemble, X, base_values: tuple | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Base plus ``learning_rate`` times the stump outputs, summed in insertion order."""
    X = np.asarray(X, dtype=float)
    if base_values is None:
        if ens.base is None:
            raise ValueError("ensemble has no base model; pass base_values")
        mu, s = ens.base.predict(X)
    else:
        mu, s = base_values
    for st in ens.stumps_mu + ens.stumps_log_sigma:
        if st.feature >= X.shape[1]:
            raise ValueError(f"stump uses feature {st.feature} but X has {X.shape[1]} columns")
    *_, last = ens.staged(X, mu, s)
    return last


GradFn = Callable[[np.ndarray, np.ndarray], "object"]


@dataclass
class Trajectory(Sequence):
    """Boosting path; entry ``t`` is the ensemble after ``t`` rounds."""

    ensemble: Ensemble
    losses: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return self.ensemble.rounds + 1

    def __getitem__(self, t):
        if isinstance(t, slice):
            return [self[i] for i in range(*t.indices(len(self)))]
        if t < 0:
            t += len(self)
        return self.ensemble.truncate(t)


def boost_trajectory(X, init_mu, init_log_sigma, grad_fn: GradFn, rounds: int,
                     learning_rate: float = 0.1, base=None, grad_scale: float | None = None,
                     grid: SplitGrid | None = None) -> Trajectory:
    """Boost ``(mu, log_sigma)`` for ``rounds`` rounds.

    Each round calls ``grad_fn(mu, log_sigma)`` (an object with ``loss``,
    ``d_mu``, ``d_log_sigma``), fits one stump to each scaled negative gradient
    and adds both with ``learning_rate``.  ``grad_scale`` defaults to the
    sample size, turning mean-type loss gradients into per-sample pseudo-residuals.
    """
    X = np.asarray(X, dtype=float)
    mu = np.array(init_mu, dtype=float)
    s = np.array(init_log_sigma, dtype=float)
    n = X.shape[0]
    if mu.shape != (n,) or s.shape != (n,):
        raise ValueError("initial values must have one entry per row")
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    scale = float(n) if grad_scale is None else float(grad_scale)
    ens = Ensemble(base, [], [], learning_rate)
    traj = Trajectory(ens)
    if rounds == 0:
        return traj
    grid = grid or SplitGrid(X)
    for t in range(rounds):
        g = grad_fn(mu, s)
        for name in ("d_mu", "d_log_sigma"):
            v = np.asarray(getattr(g, name))
            bad = np.nonzero(~np.isfinite(v))[0]
            if bad.size:
                raise BoostingError(f"round {t}: non-finite {name} at rows {bad[:5].tolist()}")
        traj.losses.append(float(g.loss))
        st_mu = fit_stump(X, -scale * np.asarray(g.d_mu), grid)
        st_s = fit_stump(X, -scale * np.asarray(g.d_log_sigma), grid)
        ens.stumps_mu.append(st_mu)
        ens.stumps_log_sigma.append(st_s)
        mu = mu + learning_rate * st_mu.predict(X)
        s = s + learning_rate * st_s.predict(X)
    return traj
