"""Greedy contrast trees over coverage indicators.

A contrast tree partitions feature space into leaves whose empirical coverage
departs as much as possible from the target ``1 - alpha``.  Growth is greedy:
each round examines every (leaf, feature, threshold) candidate whose children
both hold at least ``min_leaf`` rows, keeps those whose better child deviates
more than the current maximum, and splits the best of them.  Growth stops at
``max_leaves`` leaves or when no candidate is admissible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

N_CUTS = 64
SPLIT_CRITERIA = ("balanced", "max")


def candidate_cuts(x: np.ndarray, n_cuts: int = N_CUTS) -> np.ndarray:
    """Up to ``n_cuts`` thresholds: midpoints of distinct values, else inner quantiles."""
    u = np.unique(x)
    if u.size <= 1:
        return np.empty(0)
    if u.size <= n_cuts + 1:
        return (u[:-1] + u[1:]) / 2
    levels = np.arange(1, n_cuts + 1) / (n_cuts + 1)
    cuts = np.unique(np.quantile(x, levels))
    return cuts[cuts < u[-1]]


def default_min_leaf(n: int) -> int:
    return max(50, math.ceil(0.05 * n))


def group_deviation(covered, idx, alpha: float) -> float:
    """``|mean(covered[idx]) - (1 - alpha)|``."""
    idx = np.asarray(idx)
    if idx.size == 0:
        raise ValueError("group_deviation on an empty group")
    return abs(float(np.mean(np.asarray(covered, dtype=float)[idx])) - (1 - alpha))


@dataclass
class Leaf:
    indices: np.ndarray
    coverage: float
    deviation: float
    node: int

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass
class ContrastTree:
    """Fitted tree. ``nodes[i]`` is either ``{"leaf": k}`` or a split
    ``{"feature", "threshold", "left", "right"}``; node 0 is the root."""

    nodes: list[dict]
    leaves: list[Leaf]
    alpha: float
    min_leaf: int
    max_leaves: int
    n_features: int
    criterion: str = "balanced"
    notes: list[str] = field(default_factory=list)

    @property
    def target(self) -> float:
        return 1 - self.alpha

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def fit_max_deviation(self) -> float:
        return max(leaf.deviation for leaf in self.leaves)

    def root_split(self) -> tuple[int, float] | None:
        root = self.nodes[0]
        if "leaf" in root:
            return None
        return root["feature"], root["threshold"]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "min_leaf": self.min_leaf,
            "max_leaves": self.max_leaves,
            "n_features": self.n_features,
            "criterion": self.criterion,
            "nodes": [dict(nd) for nd in self.nodes],
            "leaves": [
                {"size": lf.size, "coverage": lf.coverage, "deviation": lf.deviation, "node": lf.node}
                for lf in self.leaves
            ],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _score(nl, nr, dl, dr, criterion: str) -> np.ndarray:
    better = np.maximum(dl, dr)
    if criterion == "max":
        return better
    n = nl + nr
    return (nl / n) * (nr / n) * better


def _leaf_candidates(X, covered, idx, target, min_leaf, criterion):
    """All admissible-size splits of one leaf as parallel arrays."""
    out = {"score": [], "better": [], "feature": [], "threshold": []}
    n = idx.size
    if n < 2 * min_leaf:
        return {k: np.empty(0) for k in out}
    cov = covered[idx]
    for f in range(X.shape[1]):
        xs_all = X[idx, f]
        order = np.argsort(xs_all, kind="stable")
        xs = xs_all[order]
        cs = np.cumsum(cov[order])
        cuts = candidate_cuts(xs)
        if cuts.size == 0:
            continue
        nl = np.searchsorted(xs, cuts, side="right")
        nr = n - nl
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        cuts, nl, nr = cuts[ok], nl[ok], nr[ok]
        sl = cs[nl - 1]
        sr = cs[-1] - sl
        dl = np.abs(sl / nl - target)
        dr = np.abs(sr / nr - target)
        out["score"].append(_score(nl, nr, dl, dr, criterion))
        out["better"].append(np.maximum(dl, dr))
        out["feature"].append(np.full(cuts.size, f))
        out["threshold"].append(cuts)
    if not out["score"]:
        return {k: np.empty(0) for k in out}
    return {k: np.concatenate(v) for k, v in out.items()}


def fit_contrast_tree(X, covered, alpha: float, max_leaves: int = 8, min_leaf: int | None = None,
                      criterion: str = "balanced") -> ContrastTree:
    """Grow a contrast tree on binary coverage indicators.

    ``criterion="balanced"`` ranks admissible splits by ``f_l * f_r * max(d_l, d_r)``
    (child fractions of the parent); ``"max"`` ranks by ``max(d_l, d_r)`` alone.
    Ties go to the earlier leaf, then lower feature index, then lower threshold.
    """
    X = np.asarray(X, dtype=float)
    covered = np.asarray(covered, dtype=float)
    n = covered.size
    if X.ndim != 2 or X.shape[0] != n:
        raise ValueError("X rows must match the coverage indicator length")
    if criterion not in SPLIT_CRITERIA:
        raise ValueError(f"unknown split criterion {criterion!r}")
    if max_leaves < 1:
        raise ValueError("max_leaves must be >= 1")
    if min_leaf is None:
        min_leaf = default_min_leaf(n)
    if n < 1 or (max_leaves > 1 and n < 2 * min_leaf):
        raise ValueError(f"contrast tree needs n >= 2 * min_leaf ({2 * min_leaf}), got n={n}")
    target = 1 - alpha

    all_idx = np.arange(n)
    root_cov = float(np.mean(covered))
    nodes: list[dict] = [{"leaf": 0}]
    leaves = [Leaf(all_idx, root_cov, abs(root_cov - target), 0)]
    cands = [_leaf_candidates(X, covered, all_idx, target, min_leaf, criterion)]

    while len(leaves) < max_leaves:
        cur_max = max(lf.deviation for lf in leaves)
        best = None  # (score, leaf, feature, threshold)
        for k, cand in enumerate(cands):
            if cand["score"].size == 0:
                continue
            ok = cand["better"] > cur_max
            if not ok.any():
                continue
            scores = np.where(ok, cand["score"], -np.inf)
            top = scores.max()
            hits = np.nonzero(scores == top)[0]
            feats = cand["feature"][hits]
            thrs = cand["threshold"][hits]
            pick = hits[np.lexsort((thrs, feats))[0]]
            if best is None or top > best[0]:
                best = (top, k, int(cand["feature"][pick]), float(cand["threshold"][pick]))
        if best is None:
            break
        _, k, f, thr = best
        parent = leaves[k]
        go_left = X[parent.indices, f] <= thr
        li, ri = parent.indices[go_left], parent.indices[~go_left]
        node_l, node_r = len(nodes), len(nodes) + 1
        nodes[parent.node] = {"feature": f, "threshold": thr, "left": node_l, "right": node_r}
        k_r = len(leaves)
        nodes.append({"leaf": k})
        nodes.append({"leaf": k_r})
        cl, cr = float(np.mean(covered[li])), float(np.mean(covered[ri]))
        leaves[k] = Leaf(li, cl, abs(cl - target), node_l)
        leaves.append(Leaf(ri, cr, abs(cr - target), node_r))
        cands[k] = _leaf_candidates(X, covered, li, target, min_leaf, criterion)
        cands.append(_leaf_candidates(X, covered, ri, target, min_leaf, criterion))

    return ContrastTree(nodes, leaves, alpha, min_leaf, max_leaves, X.shape[1], criterion)


def assign_leaves(tree: ContrastTree, X) -> np.ndarray:
    """Leaf label per row; a row goes left iff ``x[feature] <= threshold``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != tree.n_features:
        raise ValueError(f"expected {tree.n_features} features, got shape {X.shape}")
    labels = np.empty(X.shape[0], dtype=np.int64)
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node_id, rows = stack.pop()
        node = tree.nodes[node_id]
        if "leaf" in node:
            labels[rows] = node["leaf"]
            continue
        left = X[rows, node["feature"]] <= node["threshold"]
        stack.append((node["left"], rows[left]))
        stack.append((node["right"], rows[~left]))
    return labels


def leaf_deviations(tree: ContrastTree, X, covered, alpha: float) -> list[tuple[int, int, float, float]]:
    """``(leaf, size, coverage, deviation)`` for every non-empty leaf on ``(X, covered)``."""
    covered = np.asarray(covered, dtype=float)
    labels = assign_leaves(tree, X)
    rows = []
    for k in range(tree.n_leaves):
        members = labels == k
        size = int(members.sum())
        if size == 0:
            continue
        cov = float(np.mean(covered[members]))
        rows.append((k, size, cov, abs(cov - (1 - alpha))))
    return rows


def max_deviation(tree: ContrastTree, X, covered, alpha: float) -> float:
    rows = leaf_deviations(tree, X, covered, alpha)
    if not rows:
        raise ValueError("every leaf is empty on the evaluation data")
    return max(r[3] for r in rows)


def contrast_max_deviation(X, covered, alpha: float, max_leaves: int = 8, min_leaf: int | None = None,
                           criterion: str = "balanced") -> tuple[float, ContrastTree]:
    """Fit on ``(X, covered)`` and return the fitted maximum deviation with the tree.

    When the sample is too small for ``min_leaf``, the tree is reduced to a
    single leaf and the reduction is noted on the returned tree.
    """
    n = len(covered)
    ml = default_min_leaf(n) if min_leaf is None else min_leaf
    leaves = max_leaves
    note = None
    if leaves > 1 and n < 2 * ml:
        note = f"max_leaves reduced from {leaves} to 1: n={n} < 2*min_leaf={2 * ml}"
        leaves = 1
    tree = fit_contrast_tree(X, covered, alpha, leaves, ml, criterion)
    if note:
        tree.notes.append(note)
    return tree.fit_max_deviation, tree
