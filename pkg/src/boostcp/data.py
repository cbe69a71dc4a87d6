"""Datasets, CSV ingestion, response scaling, splitting and synthetic data."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    response: np.ndarray
    column_names: tuple[str, ...]
    response_name: str = "y"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.response, dtype=float)
        if X.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {X.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DataError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
        if y.shape != (n,):
            raise DataError(f"response length {y.shape} does not match {n} feature rows")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise DataError("non-finite entries in dataset")
        if len(self.column_names) != p:
            raise DataError(f"{len(self.column_names)} column names for {p} features")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.response[idx], self.column_names,
                       self.response_name, dict(self.metadata))

    def with_response(self, y) -> "Dataset":
        return Dataset(self.features, y, self.column_names, self.response_name,
                       dict(self.metadata))


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    calib: np.ndarray


@dataclass(frozen=True)
class FoldAssignment:
    """Fold label (0-based) for each position of the index set it was built from."""

    fold_of: np.ndarray
    k: int

    def folds(self, idx) -> list[np.ndarray]:
        idx = np.asarray(idx)
        return [idx[self.fold_of == j] for j in range(self.k)]


def _parse_cell(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: cannot parse {text!r} as a real") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return value


def load_csv(path, response_column: str = "last") -> Dataset:
    """Read a header-first numeric CSV into a :class:`Dataset`.

    ``response_column`` names the response; ``"last"`` takes the final column.
    Rows are numbered from 1 (first data row) in error messages.
    """
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DataError(f"duplicate header names: {dupes}")
        rows = []
        for i, raw in enumerate(reader, start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise DataError(f"row {i}: expected {len(header)} cells, got {len(raw)}")
            rows.append([_parse_cell(c.strip(), i, header[j]) for j, c in enumerate(raw)])
    if not rows:
        raise DataError(f"{path}: no rows")
    if response_column == "last":
        j = len(header) - 1
    elif response_column in header:
        j = header.index(response_column)
    else:
        raise DataError(f"response column {response_column!r} not in header {header}")
    if len(header) < 2:
        raise DataError("need at least one feature column besides the response")
    table = np.array(rows, dtype=float)
    keep = [c for c in range(len(header)) if c != j]
    return Dataset(table[:, keep], table[:, j], tuple(header[c] for c in keep), header[j])


def save_csv(ds: Dataset, path) -> None:
    """Write ``ds`` with the response as the last column, 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(ds.column_names) + [ds.response_name])
        for x, y in zip(ds.features, ds.response):
            writer.writerow([format(v, ".17g") for v in x] + [format(y, ".17g")])


def standardize_response(ds: Dataset, train_idx) -> tuple[Dataset, float]:
    """Divide the response by its mean absolute value over ``train_idx``."""
    train_idx = np.asarray(train_idx)
    scale = float(np.mean(np.abs(ds.response[train_idx])))
    if not scale > 0:
        raise DataError("mean absolute training response is zero; cannot standardize")
    scaled = ds.with_response(ds.response / scale)
    scaled.metadata["response_scale"] = scale
    scaled.metadata["response_scaling"] = "mean_abs_train"
    return scaled, scale


def split(n: int, gamma: float, seed: int) -> SplitIndices:
    """Random train/calibration split with ``round(gamma * n)`` training rows."""
    if n < 2:
        raise DataError(f"need n >= 2 to split, got {n}")
    if not 0 < gamma < 1:
        raise DataError(f"gamma must lie in (0, 1), got {gamma}")
    n_train = int(math.floor(gamma * n + 0.5))
    if n_train < 1 or n_train > n - 1:
        raise DataError(f"gamma={gamma} with n={n} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(np.sort(perm[:n_train]), np.sort(perm[n_train:]))


def kfold(idx, k: int, seed: int) -> FoldAssignment:
    """Balanced random fold labels for the positions of ``idx``."""
    m = len(idx)
    if not 2 <= k <= m:
        raise DataError(f"fold count k={k} must satisfy 2 <= k <= {m}")
    perm = np.random.default_rng(seed).permutation(m)
    fold_of = np.empty(m, dtype=np.int64)
    fold_of[perm] = np.arange(m) % k
    return FoldAssignment(fold_of, k)


# Synthetic heteroskedastic generator: Y = m(x1) + s(x1) * eps.

def synth_mean(t):
    return 2.0 * np.asarray(t, dtype=float)


def synth_scale(t):
    return 0.1 + np.asarray(t, dtype=float)


SYNTH_PARAMS = {
    "features": "uniform[0,1]^p",
    "mean": "m(t) = 2 t",
    "scale": "s(t) = 0.1 + t",
    "noise": "standard gaussian",
    "response": "y = m(x1) + s(x1) * eps",
}


def synth_heteroskedastic(n: int, p: int, seed: int) -> Dataset:
    if n < 1 or p < 1:
        raise DataError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, p))
    eps = rng.standard_normal(n)
    y = synth_mean(X[:, 0]) + synth_scale(X[:, 0]) * eps
    names = tuple(f"x{j + 1}" for j in range(p))
    return Dataset(X, y, names, "y", {"generator": dict(SYNTH_PARAMS, n=n, p=p, seed=seed)})


def synth_conditional_quantile(X, beta: float) -> np.ndarray:
    """Oracle conditional ``beta``-quantile of Y given X for the generator above."""
    x1 = np.asarray(X, dtype=float)[:, 0]
    return synth_mean(x1) + synth_scale(x1) * norm.ppf(beta)


def synth_oracle_interval(X, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Equal-tailed oracle interval with exact conditional coverage ``1 - alpha``."""
    return (synth_conditional_quantile(X, alpha / 2),
            synth_conditional_quantile(X, 1 - alpha / 2))
