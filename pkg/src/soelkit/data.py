"""Dataset ingestion, contaminated train/test construction, and synthetic data.

Split construction follows the tabular protocol: half of the normal rows
(rounded down) become the training pool, anomalies are sub-sampled into it
until the requested contamination ratio is met, and everything left over
forms the test set. Training labels are kept out of the returned train
Dataset; they ride along on the SplitResult for the simulated oracle only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CapacityError,
    ClassLookupError,
    DataValidationError,
    FormatError,
)


@dataclass(frozen=True)
class Dataset:
    """A feature matrix with optional integer labels.

    For anomaly data, labels are 0 (normal) / 1 (anomaly). Multi-class label
    vectors are accepted so that one-vs-rest splits can consume raw
    classification data; operations that need anomaly labels check for
    binary labels themselves.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise DataValidationError(
                f"features must be a non-empty 2-D matrix, got shape {feats.shape}"
            )
        if not np.all(np.isfinite(feats)):
            bad = int(np.flatnonzero(~np.isfinite(feats).all(axis=1))[0])
            raise DataValidationError(f"non-finite feature value in row {bad}")
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (feats.shape[0],):
                raise DataValidationError(
                    f"labels must have length {feats.shape[0]}, got shape {labels.shape}"
                )
            if not np.all(labels == labels.astype(np.int64)):
                raise DataValidationError("labels must be integers")
            labels = labels.astype(np.int64)
            if np.any(labels < 0):
                raise DataValidationError("labels must be non-negative")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def has_binary_labels(self) -> bool:
        return self.labels is not None and bool(np.all(self.labels <= 1))


@dataclass(frozen=True)
class ContaminationSpec:
    """Target anomaly fraction of the training pool, with RNG seed."""

    contamination_ratio: float
    seed: int = 0
    normal_class: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.contamination_ratio < 0.5):
            raise DataValidationError(
                f"contamination_ratio must be in [0, 0.5), got {self.contamination_ratio}"
            )


@dataclass(frozen=True)
class SplitResult:
    """Contaminated train pool plus held-out test set.

    ``train.labels`` is None by construction; the ground-truth train labels
    are stored in ``train_hidden_labels`` and should only be read through
    the oracle in the evaluation module.
    """

    train: Dataset
    test: Dataset
    realized_train_ratio: float
    train_hidden_labels: np.ndarray = field(repr=False)


def _require_binary(data: Dataset, op: str) -> None:
    if data.labels is None:
        raise DataValidationError(f"{op} requires a labeled dataset")
    if not data.has_binary_labels:
        raise DataValidationError(f"{op} requires binary 0/1 labels")


def load_features(path: str | Path, label_column: str | None = None) -> Dataset:
    """Load a CSV feature file (header row, float cells, optional label column).

    The same layout serves for precomputed embedding files. Labels are
    populated only when `label_column` is given.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        label_idx = None
        if label_column is not None:
            if label_column not in header:
                raise FormatError(f"{path}: no column named {label_column!r} in header")
            label_idx = header.index(label_column)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataValidationError(
                    f"{path}:{lineno}: non-finite value in data row {lineno - 2}"
                )
            if label_idx is not None:
                labels.append(vals.pop(label_idx))
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    features = np.array(rows, dtype=np.float64)
    return Dataset(
        features=features,
        labels=np.array(labels) if label_idx is not None else None,
        name=path.stem,
    )


def _anomaly_count_for_ratio(n_normal: int, ratio: float) -> int:
    # Nearest integer count a with a / (n_normal + a) = ratio, floored at 0.
    if ratio <= 0.0:
        return 0
    return max(0, int(math.floor(n_normal * ratio / (1.0 - ratio) + 0.5)))


def make_tabular_split(data: Dataset, spec: ContaminationSpec) -> SplitResult:
    """Half the normals train / half test; anomalies sub-sampled into train.

    Deterministic under ``spec.seed``. Raises CapacityError when the data
    does not contain enough anomalies to reach the requested ratio.
    """
    _require_binary(data, "make_tabular_split")
    rng = np.random.default_rng(spec.seed)
    normal_idx = np.flatnonzero(data.labels == 0)
    anomaly_idx = np.flatnonzero(data.labels == 1)
    if normal_idx.size == 0:
        raise DataValidationError("dataset contains no normal rows")

    n_train_normal = normal_idx.size // 2
    shuffled_normals = rng.permutation(normal_idx)
    train_normals = shuffled_normals[:n_train_normal]
    test_normals = shuffled_normals[n_train_normal:]

    need = _anomaly_count_for_ratio(n_train_normal, spec.contamination_ratio)
    if need > anomaly_idx.size:
        max_ratio = anomaly_idx.size / (n_train_normal + anomaly_idx.size)
        raise CapacityError(
            f"need {need} anomalies for ratio {spec.contamination_ratio} "
            f"but only {anomaly_idx.size} available (max achievable ratio "
            f"{max_ratio:.4f})"
        )
    shuffled_anoms = rng.permutation(anomaly_idx)
    train_anoms = shuffled_anoms[:need]
    test_anoms = shuffled_anoms[need:]

    return _assemble_split(data, train_normals, train_anoms, test_normals, test_anoms)


def make_one_vs_rest_split(data: Dataset, spec: ContaminationSpec) -> SplitResult:
    """One class is normal; random rows from the rest contaminate its train half.

    Test keeps every remaining row with labels collapsed to binary.
    """
    if data.labels is None:
        raise DataValidationError("make_one_vs_rest_split requires class labels")
    if spec.normal_class is None:
        raise DataValidationError("spec.normal_class must be set for one-vs-rest")
    classes = np.unique(data.labels)
    if spec.normal_class not in classes:
        raise ClassLookupError(spec.normal_class)

    rng = np.random.default_rng(spec.seed)
    normal_idx = np.flatnonzero(data.labels == spec.normal_class)
    other_idx = np.flatnonzero(data.labels != spec.normal_class)

    n_train_normal = normal_idx.size // 2
    shuffled_normals = rng.permutation(normal_idx)
    train_normals = shuffled_normals[:n_train_normal]
    test_normals = shuffled_normals[n_train_normal:]

    need = _anomaly_count_for_ratio(n_train_normal, spec.contamination_ratio)
    if need > other_idx.size:
        max_ratio = other_idx.size / (n_train_normal + other_idx.size)
        raise CapacityError(
            f"need {need} contaminating rows, only {other_idx.size} available "
            f"(max achievable ratio {max_ratio:.4f})"
        )
    shuffled_others = rng.permutation(other_idx)
    train_anoms = shuffled_others[:need]
    test_anoms = shuffled_others[need:]

    return _assemble_split(data, train_normals, train_anoms, test_normals, test_anoms)


def _assemble_split(data, train_normals, train_anoms, test_normals, test_anoms):
    train_idx = np.concatenate([train_normals, train_anoms])
    test_idx = np.concatenate([test_normals, test_anoms])
    train_labels = np.concatenate(
        [np.zeros(train_normals.size, np.int64), np.ones(train_anoms.size, np.int64)]
    )
    test_labels = np.concatenate(
        [np.zeros(test_normals.size, np.int64), np.ones(test_anoms.size, np.int64)]
    )
    realized = train_anoms.size / max(train_idx.size, 1)
    return SplitResult(
        train=Dataset(data.features[train_idx], None, name=f"{data.name}-train"),
        test=Dataset(data.features[test_idx], test_labels, name=f"{data.name}-test"),
        realized_train_ratio=float(realized),
        train_hidden_labels=train_labels,
    )


def synth_toy(
    n_normal: int,
    n_anomaly: int,
    geometry: str = "blob-ring",
    seed: int | np.random.SeedSequence = 0,
) -> Dataset:
    """2-D toy data: a Gaussian blob of normals plus ring or displaced-blob anomalies.

    blob-ring: normals ~ N(0, 0.5^2 I); anomalies on a radius-3 ring with
    radial noise 0.2. two-blobs: anomalies ~ N((3, 3), 0.5^2 I).
    """
    if n_normal < 0 or n_anomaly < 0 or n_normal + n_anomaly < 1:
        raise DataValidationError("counts must be non-negative and sum to >= 1")
    if geometry not in ("blob-ring", "two-blobs"):
        raise DataValidationError(f"unknown geometry {geometry!r}")
    rng = np.random.default_rng(seed)
    normals = rng.normal(0.0, 0.5, size=(n_normal, 2))
    if geometry == "blob-ring":
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n_anomaly)
        radii = 3.0 + rng.normal(0.0, 0.2, size=n_anomaly)
        anomalies = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
    else:
        anomalies = rng.normal(0.0, 0.5, size=(n_anomaly, 2)) + np.array([3.0, 3.0])
    features = np.concatenate([normals, anomalies], axis=0)
    labels = np.concatenate(
        [np.zeros(n_normal, np.int64), np.ones(n_anomaly, np.int64)]
    )
    return Dataset(features, labels, name=f"toy-{geometry}")


def make_toy_split(
    n_normal: int,
    n_anomaly: int,
    geometry: str = "blob-ring",
    seed: int = 0,
) -> SplitResult:
    """Independent train and test draws with the same composition."""
    train_ss, test_ss = np.random.SeedSequence(seed).spawn(2)
    train = synth_toy(n_normal, n_anomaly, geometry, train_ss)
    test = synth_toy(n_normal, n_anomaly, geometry, test_ss)
    total = n_normal + n_anomaly
    return SplitResult(
        train=Dataset(train.features, None, name=f"{train.name}-train"),
        test=Dataset(test.features, test.labels, name=f"{test.name}-test"),
        realized_train_ratio=n_anomaly / total,
        train_hidden_labels=train.labels,
    )


def synth_clusters(
    n_per_cluster: int = 100,
    n_clusters: int = 4,
    cluster_std: float = 0.6,
    seed: int = 0,
) -> Dataset:
    """Gaussian clusters with alternating normal/anomaly labels (cover studies)."""
    if n_clusters == 4:
        centers = np.array([[3, 3], [3, -3], [-3, 3], [-3, -3]], dtype=np.float64)
    else:
        angles = 2.0 * np.pi * np.arange(n_clusters) / n_clusters
        centers = 4.25 * np.column_stack([np.cos(angles), np.sin(angles)])
    rng = np.random.default_rng(seed)
    feats = np.concatenate(
        [rng.normal(c, cluster_std, size=(n_per_cluster, 2)) for c in centers]
    )
    labels = np.concatenate(
        [np.full(n_per_cluster, k % 2, dtype=np.int64) for k in range(n_clusters)]
    )
    return Dataset(feats, labels, name=f"clusters-{n_clusters}")
