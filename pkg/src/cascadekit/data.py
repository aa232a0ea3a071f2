"""Dataset ingestion, normalization, feature engineering, and synthetic data.

A :class:`Dataset` is an immutable bundle of a feature matrix, binary labels,
feature names, and (once fitted) per-feature normalization statistics.  The
synthetic generator produces detection-style data with a deliberately
imbalanced class structure: most negatives are trivially rejectable from a
handful of cheap features, while the rest require a nonlinear decision over
the full feature space.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .util import substream

__all__ = [
    "Dataset",
    "SynthConfig",
    "CsvParseError",
    "load_csv",
    "save_csv",
    "zscore_fit_apply",
    "apply_norm_stats",
    "basis_expand",
    "stratified_split",
    "synth_generate",
]


class CsvParseError(ValueError):
    """Malformed dataset file: bad header, non-numeric feature, or non-binary label."""


@dataclass(frozen=True)
class Dataset:
    """Labeled feature vectors plus optional normalization statistics.

    X is an (n, dim) float64 matrix, y an (n,) array of {0, 1} labels
    (1 = detection/positive class).  norm_stats, when present, holds the
    per-feature (mean, stddev) that produced this dataset's scaling.
    Arrays are frozen after construction; transformations return new objects.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] = ()
    norm_stats: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
        if not np.isfinite(X).all():
            raise ValueError("feature values must be finite")
        y = y.astype(np.int64)
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        names = tuple(self.feature_names) or tuple(f"f{i + 1}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError(f"{len(names)} feature names for {X.shape[1]} columns")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_positive(self) -> int:
        return int(self.y.sum())

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.X[idx], self.y[idx], self.feature_names, self.norm_stats)


@dataclass(frozen=True)
class SynthConfig:
    """Shape parameters for the synthetic detection dataset.

    cheap_dim columns form the inexpensive first-stage view;
    cheap_separable_fraction of the negatives are linearly separable from
    positives inside that view.  Requires dim >= cheap_dim + 2 because the
    hard negatives are distinguished by an interaction between two of the
    remaining (expensive) coordinates.
    """

    n_total: int = 3836
    positive_fraction: float = 291 / 3836
    dim: int = 37
    cheap_dim: int = 5
    cheap_separable_fraction: float = 0.9
    seed: int = 0
    # Cluster geometry: offset of the cheap-view separation, half-distance of
    # the interaction clusters, shared unit noise scale.
    cheap_offset: float = field(default=1.5, repr=False)
    hard_offset: float = field(default=2.0, repr=False)

    def __post_init__(self):
        if self.n_total <= 0:
            raise ValueError("n_total must be positive")
        if not 0.0 < self.positive_fraction < 1.0:
            raise ValueError("positive_fraction must lie in (0, 1)")
        if not 0.0 < self.cheap_separable_fraction < 1.0:
            raise ValueError("cheap_separable_fraction must lie in (0, 1)")
        if self.cheap_dim <= 0 or self.dim <= 0:
            raise ValueError("dim and cheap_dim must be positive")
        if self.cheap_dim > self.dim:
            raise ValueError("cheap_dim cannot exceed dim")
        if self.dim < self.cheap_dim + 2:
            raise ValueError("need dim >= cheap_dim + 2 for the hard-negative structure")


def load_csv(path) -> Dataset:
    """Load a dataset from CSV: header ``f1,...,fd,label``, one instance per row.

    The label column must be last and binary; every other column is a feature.
    Row numbers in error messages are 1-based over data rows (header excluded).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: empty file") from None
        if len(header) < 2 or header[-1].strip() != "label":
            raise CsvParseError(f"{path}: header must end with a 'label' column")
        names = tuple(h.strip() for h in header[:-1])
        dim = len(names)
        rows, labels = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != dim + 1:
                raise CsvParseError(
                    f"{path}: row {row_no} has {len(row)} fields, expected {dim + 1}"
                )
            values = np.empty(dim)
            for col, cell in enumerate(row[:-1]):
                try:
                    values[col] = float(cell)
                except ValueError:
                    raise CsvParseError(
                        f"{path}: row {row_no}, column {names[col]!r}: "
                        f"non-numeric feature {cell!r}"
                    ) from None
                if not math.isfinite(values[col]):
                    raise CsvParseError(
                        f"{path}: row {row_no}, column {names[col]!r}: "
                        f"non-finite feature {cell!r}"
                    )
            try:
                label = float(row[-1])
            except ValueError:
                raise CsvParseError(
                    f"{path}: row {row_no}: non-numeric label {row[-1]!r}"
                ) from None
            if label not in (0.0, 1.0):
                raise CsvParseError(f"{path}: row {row_no}: non-binary label {row[-1]!r}")
            rows.append(values)
            labels.append(int(label))
    if not rows:
        raise CsvParseError(f"{path}: no data rows")
    return Dataset(np.vstack(rows), np.array(labels), names)


def save_csv(data: Dataset, path) -> None:
    """Write a dataset in the same CSV layout load_csv reads (LF line endings)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join([*data.feature_names, "label"]) + "\n")
        for row, label in zip(data.X, data.y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def zscore_fit_apply(train: Dataset, others: tuple[Dataset, ...] = ()):
    """Standardize datasets with per-feature statistics fitted on `train` only.

    Uses the population stddev (divide by N).  A constant feature gets
    stddev 1 so it maps to centered zeros instead of blowing up.  Returns
    (normalized_train, list_of_normalized_others); the fitted stats ride
    along in each returned dataset's norm_stats.
    """
    if train.n == 0:
        raise ValueError("training set is empty")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)

    def apply(ds: Dataset) -> Dataset:
        if ds.dim != train.dim:
            raise ValueError(f"dimension mismatch: {ds.dim} != {train.dim}")
        return Dataset((ds.X - mean) / std, ds.y, ds.feature_names, (mean, std))

    return apply(train), [apply(ds) for ds in others]


def apply_norm_stats(data: Dataset, stats: tuple[np.ndarray, np.ndarray]) -> Dataset:
    """Apply previously fitted (mean, stddev) to a raw dataset."""
    mean, std = np.asarray(stats[0], dtype=float), np.asarray(stats[1], dtype=float)
    if mean.shape != (data.dim,) or std.shape != (data.dim,):
        raise ValueError("normalization stats do not match the data dimension")
    return Dataset((data.X - mean) / std, data.y, data.feature_names, (mean, std))


def basis_expand(roll, pitch) -> np.ndarray:
    """Quadratic expansion of a (roll, pitch) pair: [x, y, x^2, y^2, x*y].

    Accepts scalars or same-shape arrays; the expansion axis is appended last.
    Inputs are expected to be already standardized; re-standardize the five
    outputs before feeding them to a model.
    """
    x = np.asarray(roll, dtype=float)
    y = np.asarray(pitch, dtype=float)
    return np.stack([x, y, x * x, y * y, x * y], axis=-1)


def stratified_split(data: Dataset, train_count: int, train_pos_count: int, seed: int):
    """Split into train/test with exact per-class counts via a seeded permutation.

    The train set gets exactly `train_pos_count` positives and
    `train_count - train_pos_count` negatives; the test set receives the
    remainder.  Instances keep their original relative order inside each part.
    """
    pos = np.flatnonzero(data.y == 1)
    neg = np.flatnonzero(data.y == 0)
    train_neg_count = train_count - train_pos_count
    if not (0 <= train_pos_count <= pos.size and 0 <= train_neg_count <= neg.size):
        raise ValueError(
            f"infeasible split: requested {train_pos_count} positives of {pos.size} "
            f"and {train_neg_count} negatives of {neg.size}"
        )
    rng = substream(seed, "data/split")
    pos_sel = rng.permutation(pos.size)[:train_pos_count]
    neg_sel = rng.permutation(neg.size)[:train_neg_count]
    train_idx = np.zeros(data.n, dtype=bool)
    train_idx[pos[pos_sel]] = True
    train_idx[neg[neg_sel]] = True
    return data.subset(np.flatnonzero(train_idx)), data.subset(np.flatnonzero(~train_idx))


def synth_generate(cfg: SynthConfig) -> Dataset:
    """Generate a detection dataset shaped for shallow-cascade experiments.

    Layout of the feature space (d = cfg.dim, c = cfg.cheap_dim):

    * columns 0..c-1 (cheap view): positives sit at +cheap_offset per
      coordinate, "easy" negatives at -cheap_offset, so a linear model on the
      cheap view rejects them with a wide margin.  "Hard" negatives share the
      positives' cheap distribution and are invisible there.
    * columns c, c+1 (interaction pair): positives occupy the two diagonal
      clusters (+s,+s)/(-s,-s), negatives the off-diagonal ones, with
      s = hard_offset.  No linear boundary separates the classes here; a
      hidden-layer model resolves it easily.
    * remaining columns: unit Gaussian noise for every class.

    All coordinates carry unit Gaussian noise around their cluster centers.
    The output is a pure function of the config (bit-identical per seed).
    """
    rng = substream(cfg.seed, "data/synth")
    n_pos = int(round(cfg.positive_fraction * cfg.n_total))
    n_neg = cfg.n_total - n_pos
    n_easy = int(math.ceil(cfg.cheap_separable_fraction * n_neg))
    n_hard = n_neg - n_easy
    c, d, s = cfg.cheap_dim, cfg.dim, cfg.hard_offset

    X = rng.standard_normal((cfg.n_total, d))
    y = np.zeros(cfg.n_total, dtype=np.int64)
    y[:n_pos] = 1

    # Cheap view: +offset for positives and hard negatives, -offset for easy ones.
    X[:n_pos, :c] += cfg.cheap_offset
    X[n_pos : n_pos + n_easy, :c] -= cfg.cheap_offset
    X[n_pos + n_easy :, :c] += cfg.cheap_offset

    # Interaction pair: diagonal clusters for positives, off-diagonal for negatives.
    pos_sign = np.where(rng.random(n_pos) < 0.5, 1.0, -1.0)
    X[:n_pos, c] += s * pos_sign
    X[:n_pos, c + 1] += s * pos_sign
    neg_sign = np.where(rng.random(n_neg) < 0.5, 1.0, -1.0)
    X[n_pos:, c] += s * neg_sign
    X[n_pos:, c + 1] -= s * neg_sign

    order = rng.permutation(cfg.n_total)
    return Dataset(X[order], y[order])
