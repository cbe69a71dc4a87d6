"""Test-set evaluation and report assembly."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .conformal import Intervals
from .contrast_tree import candidate_cuts, contrast_max_deviation, leaf_deviations
from .losses import coverage_indicators, length_loss


def marginal_coverage(intervals: Intervals, y) -> float:
    """Fraction of responses inside their closed interval."""
    y = np.asarray(y, dtype=float)
    if len(intervals) != y.size:
        raise ValueError(f"{len(intervals)} intervals for {y.size} responses")
    return float(np.mean(coverage_indicators(intervals, y)))


@dataclass
class EvalReport:
    marginal_coverage: float
    avg_length: float
    max_cond_deviation: float
    leaf_table: list[dict]
    alpha: float
    n_test: int
    tree: dict = field(default_factory=dict)
    config: dict | None = None
    seed: int | None = None
    improvement_vs_baseline: dict | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def evaluate_intervals(X, y, intervals: Intervals, alpha: float, max_leaves: int = 8,
                       min_leaf: int | None = None, criterion: str = "balanced",
                       length_scale: float = 1.0) -> EvalReport:
    """Coverage, mean length and contrast-tree deviation of fixed intervals.

    The tree is fit on the evaluation data's own coverage indicators.  The leaf
    table lists every leaf by decreasing miscoverage.  ``length_scale``
    multiplies reported lengths (for standardized-response inputs).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size or len(intervals) != y.size:
        raise ValueError("X, y and intervals must have the same number of rows")
    if y.size == 0:
        raise ValueError("empty evaluation set")
    covered = coverage_indicators(intervals, y)
    avg_len = length_loss(intervals) * length_scale
    dev, tree = contrast_max_deviation(X, covered, alpha, max_leaves, min_leaf, criterion)
    rows = [
        {"leaf": k, "size": size, "size_fraction": size / y.size, "coverage": cov,
         "miscoverage": 1.0 - cov, "deviation": d}
        for k, size, cov, d in leaf_deviations(tree, X, covered, alpha)
    ]
    rows.sort(key=lambda r: (-r["miscoverage"], r["leaf"]))
    return EvalReport(float(np.mean(covered)), avg_len, dev, rows, alpha, int(y.size), tree.to_dict())


def evaluate(test, model, which: str = "boosted", max_leaves: int | None = None,
             min_leaf: int | None = None) -> EvalReport:
    """Evaluate a fitted :class:`~boostcp.pipeline.BoostedConformal` on a test dataset."""
    cfg = model.config
    iv = model.intervals(test.features, which)
    rep = evaluate_intervals(test.features, test.response, iv, cfg.alpha,
                             cfg.max_leaves if max_leaves is None else max_leaves,
                             cfg.min_leaf if min_leaf is None else min_leaf, cfg.split_criterion)
    rep.config = cfg.to_dict()
    rep.seed = cfg.seed
    return rep


def relative_change(new: float, old: float) -> float | None:
    """Signed relative change; negative means ``new`` is smaller."""
    if old > 0 and math.isfinite(old) and math.isfinite(new):
        return (new - old) / old
    return None


def improvement(boosted: EvalReport, baseline: EvalReport) -> dict:
    return {
        "avg_length": relative_change(boosted.avg_length, baseline.avg_length),
        "max_cond_deviation": relative_change(boosted.max_cond_deviation, baseline.max_cond_deviation),
    }


def _regression_tree_leaves(X, y, max_leaves: int, min_leaf: int = 1):
    """Best-first least-squares tree; returns split nodes and leaf count."""
    nodes = [{"leaf": 0}]
    leaves = [(np.arange(y.size), 0)]  # (row indices, node id)

    def best_split(idx):
        best = None
        ys = y[idx]
        total, n = ys.sum(), idx.size
        for f in range(X.shape[1]):
            order = np.argsort(X[idx, f], kind="stable")
            xs = X[idx, f][order]
            cs = np.cumsum(ys[order])
            cuts = candidate_cuts(xs)
            if cuts.size == 0:
                continue
            nl = np.searchsorted(xs, cuts, side="right")
            ok = (nl >= min_leaf) & (n - nl >= min_leaf)
            if not ok.any():
                continue
            cuts, nl = cuts[ok], nl[ok]
            sl = cs[nl - 1]
            gain = sl ** 2 / nl + (total - sl) ** 2 / (n - nl) - total ** 2 / n
            i = int(np.argmax(gain))
            if gain[i] > 1e-12 and (best is None or gain[i] > best[0]):
                best = (float(gain[i]), f, float(cuts[i]))
        return best

    cands = [best_split(leaves[0][0])]
    while len(leaves) < max_leaves:
        scored = [(c[0], k) for k, c in enumerate(cands) if c is not None]
        if not scored:
            break
        _, k = max(scored, key=lambda t: (t[0], -t[1]))
        _, f, thr = cands[k]
        idx, node = leaves[k]
        left = X[idx, f] <= thr
        nl_id, nr_id = len(nodes), len(nodes) + 1
        nodes[node] = {"feature": f, "threshold": thr, "left": nl_id, "right": nr_id}
        k_r = len(leaves)
        nodes += [{"leaf": k}, {"leaf": k_r}]
        leaves[k] = (idx[left], nl_id)
        leaves.append((idx[~left], nr_id))
        cands[k] = best_split(idx[left])
        cands.append(best_split(idx[~left]))
    return nodes, len(leaves)


def _route(nodes, X) -> np.ndarray:
    labels = np.empty(X.shape[0], dtype=np.int64)
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        nid, rows = stack.pop()
        nd = nodes[nid]
        if "leaf" in nd:
            labels[rows] = nd["leaf"]
            continue
        left = X[rows, nd["feature"]] <= nd["threshold"]
        stack += [(nd["left"], rows[left]), (nd["right"], rows[~left])]
    return labels


def regression_tree_leaf_comparison(train_X, train_y, test_X, intervals_a: Intervals,
                                    intervals_b: Intervals, max_leaves: int = 4) -> dict:
    """Compare mean interval lengths of two methods within regression-tree leaves.

    A least-squares tree with at most ``max_leaves`` leaves is fit on the
    training data to predict the response, then applied to the test rows.
    ``log_ratio`` is ``log(mean_length_a / mean_length_b)`` per leaf.
    """
    train_X = np.asarray(train_X, dtype=float)
    test_X = np.asarray(test_X, dtype=float)
    for name, iv in (("a", intervals_a), ("b", intervals_b)):
        if not np.isfinite(iv.length).all():
            raise ValueError(f"interval set {name} has infinite intervals")
        if len(iv) != test_X.shape[0]:
            raise ValueError(f"interval set {name} does not match the test rows")
    nodes, n_leaves = _regression_tree_leaves(train_X, np.asarray(train_y, dtype=float), max_leaves)
    labels = _route(nodes, test_X)
    rows = []
    for k in range(n_leaves):
        members = labels == k
        if not members.any():
            continue
        la = float(np.mean(intervals_a.length[members]))
        lb = float(np.mean(intervals_b.length[members]))
        ratio = math.log(la / lb) if la > 0 and lb > 0 else None
        rows.append({"leaf": k, "size": int(members.sum()), "mean_length_a": la,
                     "mean_length_b": lb, "log_ratio": ratio})
    out = {"nodes": nodes, "n_leaves": n_leaves, "leaves": rows}
    if n_leaves < max_leaves:
        out["note"] = f"only {n_leaves} leaves could be formed (requested {max_leaves})"
    return out


def aggregate(values) -> dict:
    """Mean with 10% and 90% empirical quantiles."""
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return {"mean": None, "q10": None, "q90": None, "n": 0}
    return {"mean": float(np.mean(v)), "q10": float(np.quantile(v, 0.1)),
            "q90": float(np.quantile(v, 0.9)), "n": int(v.size)}


def write_leaf_table_csv(report: EvalReport, path) -> None:
    cols = ["leaf", "size", "size_fraction", "coverage", "miscoverage", "deviation"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in report.leaf_table:
            w.writerow({c: row[c] for c in cols})


def write_cv_curve_csv(cv_curve, path) -> None:
    curve = np.asarray(cv_curve)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round"] + [f"fold{j}" for j in range(curve.shape[0])] + ["mean"])
        for t in range(curve.shape[1]):
            w.writerow([t] + [repr(float(v)) for v in curve[:, t]] + [repr(float(curve[:, t].mean()))])
