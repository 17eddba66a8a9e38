"""Dataset ingestion and batch references.

Feature data lives in one dense (N x features) float64 array per dataset;
a BatchRef is a contiguous row range into such an array and materializes as
a numpy view, never a copy.  LIBSVM text (optionally gzipped) is the only
on-disk format.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .linalg import Matrix


class LabelMapping(Enum):
    ZERO_ONE = "zero_one"  # labels taken verbatim as non-negative class indices
    PLUS_MINUS_ONE = "plus_minus_one"  # -1 -> 0, +1 -> 1


class LibsvmParseError(ValueError):
    """Malformed LIBSVM input; message carries the 1-based line number."""


@dataclass
class Dataset:
    features: Matrix  # (N, d), dense, C-contiguous
    labels: np.ndarray  # (N,), int64 class indices
    name: str = ""

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be a non-empty 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels length must equal the number of feature rows")
        if self.labels.min() < 0:
            raise ValueError("labels must be non-negative class indices")

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return int(self.labels.max()) + 1


@dataclass(frozen=True)
class BatchRef:
    """Contiguous row range [start, start+length) of a dataset's arrays."""

    features: Matrix
    labels: np.ndarray
    start: int
    length: int

    def __post_init__(self):
        if self.length < 1 or self.start < 0 or self.start + self.length > self.features.shape[0]:
            raise ValueError(
                f"batch range [{self.start}, {self.start + self.length}) out of bounds"
                f" for {self.features.shape[0]} rows"
            )

    @property
    def x(self) -> Matrix:
        return self.features[self.start : self.start + self.length]

    @property
    def y(self) -> np.ndarray:
        return self.labels[self.start : self.start + self.length]


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt")
    return open(path, "r")


def _map_label(raw: str, mapping: LabelMapping, line_no: int) -> int:
    # Multi-label lines list comma-separated labels; keep the first one.
    first = raw.split(",")[0]
    try:
        value = int(float(first))
    except ValueError:
        raise LibsvmParseError(f"line {line_no}: bad label {raw!r}") from None
    if mapping is LabelMapping.PLUS_MINUS_ONE:
        if value == -1:
            return 0
        if value == 1:
            return 1
        raise LibsvmParseError(f"line {line_no}: label {value} not in {{-1, +1}}")
    if value < 0:
        raise LibsvmParseError(f"line {line_no}: negative label {value} with zero_one mapping")
    return value


def load_libsvm(
    path,
    feature_dim: int,
    label_mapping: LabelMapping = LabelMapping.ZERO_ONE,
    minmax_scale: bool = False,
    name: str | None = None,
) -> Dataset:
    """Parse LIBSVM text (1-based sparse indices) into a dense Dataset.

    Missing features are zero.  A feature index above `feature_dim` is an
    input error; malformed tokens raise LibsvmParseError with the line
    number.  Gzip input is detected by the .gz extension.
    """
    path = Path(path)
    rows: list[np.ndarray] = []
    labels: list[int] = []
    with _open_text(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            labels.append(_map_label(tokens[0], label_mapping, line_no))
            row = np.zeros(feature_dim, dtype=np.float64)
            for tok in tokens[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise LibsvmParseError(f"line {line_no}: bad feature token {tok!r}") from None
                if idx < 1 or idx > feature_dim:
                    raise ValueError(
                        f"line {line_no}: feature index {idx} outside [1, {feature_dim}]"
                    )
                row[idx - 1] = val
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no examples")
    features = np.ascontiguousarray(np.vstack(rows))
    if minmax_scale:
        features = _minmax_scale(features)
    return Dataset(
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        name=name or path.stem,
    )


def save_libsvm(ds: Dataset, path) -> None:
    """Write a dataset as LIBSVM text (zeros omitted, 1-based indices)."""
    path = Path(path)
    opener = gzip.open(path, "wt") if path.suffix == ".gz" else open(path, "w")
    with opener as fh:
        for i in range(ds.n_examples):
            row = ds.features[i]
            nz = np.nonzero(row)[0]
            parts = [str(int(ds.labels[i]))]
            parts.extend(f"{j + 1}:{row[j]:.17g}" for j in nz)
            fh.write(" ".join(parts) + "\n")


def _minmax_scale(features: Matrix) -> Matrix:
    lo = features.min(axis=0)
    span = features.max(axis=0) - lo
    span[span == 0.0] = 1.0
    return (features - lo) / span


def remap_labels_dense(ds: Dataset) -> Dataset:
    """Remap label values onto contiguous 0..k-1 indices (sorted order)."""
    values = np.unique(ds.labels)
    lut = np.zeros(values.max() + 1, dtype=np.int64)
    lut[values] = np.arange(len(values))
    return Dataset(features=ds.features, labels=lut[ds.labels], name=ds.name)


def shuffle_epoch(ds: Dataset, seed) -> np.ndarray:
    """Deterministic permutation of [0, N) for the given seed."""
    return np.random.default_rng(seed).permutation(ds.n_examples)


def reorder(ds: Dataset, perm: np.ndarray) -> Dataset:
    """Materialize a row-permuted copy so batch ranges stay contiguous."""
    return Dataset(
        features=np.ascontiguousarray(ds.features[perm]),
        labels=ds.labels[perm].copy(),
        name=ds.name,
    )


def subsample(ds: Dataset, n: int, seed) -> Dataset:
    """Deterministic stratified-by-label sample of n rows."""
    if n < 1:
        raise ValueError("subsample size must be >= 1")
    if n > ds.n_examples:
        raise ValueError(f"subsample size {n} exceeds dataset size {ds.n_examples}")
    rng = np.random.default_rng(seed)
    values, counts = np.unique(ds.labels, return_counts=True)
    exact = counts * (n / ds.n_examples)
    take = np.floor(exact).astype(np.int64)
    # Largest-remainder rounding so the takes sum to n with every class kept
    # proportionally.
    remainder_order = np.argsort(-(exact - take))
    for idx in remainder_order[: n - int(take.sum())]:
        take[idx] += 1
    picked = []
    for value, k in zip(values, take):
        if k == 0:
            continue
        members = np.nonzero(ds.labels == value)[0]
        picked.append(rng.choice(members, size=int(k), replace=False))
    rows = np.concatenate(picked)
    rows = rows[rng.permutation(len(rows))]
    return Dataset(
        features=np.ascontiguousarray(ds.features[rows]),
        labels=ds.labels[rows].copy(),
        name=f"{ds.name}[n={n}]",
    )


def synthetic_blobs(n: int, dim: int, classes: int, separation: float, seed) -> Dataset:
    """Gaussian clusters with minimum class-mean distance `separation`.

    Unit-variance isotropic noise around each class mean; rows are shuffled
    so contiguous batches mix classes.  separation=0 collapses every mean
    to the origin (no signal).
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(classes, dim))
    raw -= raw.mean(axis=0)
    if separation > 0:
        dists = [
            np.linalg.norm(raw[i] - raw[j]) for i in range(classes) for j in range(i + 1, classes)
        ]
        means = raw * (separation / min(dists))
    else:
        means = np.zeros_like(raw)
    labels = np.arange(n, dtype=np.int64) % classes
    features = means[labels] + rng.normal(size=(n, dim))
    perm = rng.permutation(n)
    return Dataset(
        features=np.ascontiguousarray(features[perm]),
        labels=labels[perm].copy(),
        name=f"blobs(n={n},dim={dim},k={classes},sep={separation})",
    )
