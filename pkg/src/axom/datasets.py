"""CSV loading, 0-1 normalization and stratified train/test splitting.

Features are normalized per column with min/max statistics taken from the
training rows only; test rows may land slightly outside [0, 1] and are not
clipped.  Splits are stratified and fully determined by (dataset, seed,
fraction).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


class DatasetError(Exception):
    """Base class for dataset loading/normalization failures."""


class CsvParseError(DatasetError):
    def __init__(self, path, row_number, message):
        self.row_number = row_number
        super().__init__(f"{path}: row {row_number}: {message}")


class EmptyDatasetError(DatasetError):
    pass


class ConstantFeatureError(DatasetError):
    def __init__(self, column_name):
        self.column_name = column_name
        super().__init__(f"feature {column_name!r} is constant on the training rows")


@dataclass(frozen=True)
class DatasetSchema:
    """Column layout of a dataset CSV.

    label_column indexes into the raw CSV columns (negative counts from the
    end), drop_columns are removed before features are assembled (e.g. an id
    column).  notes records interpretation caveats such as alternative
    feature counts quoted elsewhere.
    """

    name: str
    n_features: int
    n_classes: int
    label_column: int = -1
    drop_columns: tuple[int, ...] = ()
    delimiter: str = ","
    notes: str = ""


BUILTIN_SCHEMAS = {
    "wine": DatasetSchema(
        name="wine",
        n_features=13,
        n_classes=3,
        notes="178 rows; 13 chemical analysis features, cultivar label last.",
    ),
    "glass": DatasetSchema(
        name="glass",
        n_features=9,
        n_classes=6,
        drop_columns=(0,),
        notes=(
            "214 rows; id column dropped at load. Sometimes quoted with 10 "
            "features when the label (or id) column is counted in."
        ),
    ),
    "seeds": DatasetSchema(
        name="seeds",
        n_features=7,
        n_classes=3,
        notes="210 rows; 7 geometric kernel measurements, variety label last.",
    ),
    "banknote": DatasetSchema(
        name="banknote",
        n_features=4,
        n_classes=2,
        notes=(
            "1372 rows; 4 wavelet-statistic features. Sometimes quoted with 5 "
            "features when the class column is counted in."
        ),
    ),
}

DATASET_NAMES = tuple(BUILTIN_SCHEMAS)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus integer labels remapped to 0..n_classes-1.

    normalization holds the per-feature (min, max) pairs recorded from the
    training rows once ``normalize`` has run, else None.
    """

    name: str
    features: np.ndarray  # (n_samples, n_features) float64
    labels: np.ndarray  # (n_samples,) int64
    feature_names: tuple[str, ...]
    n_classes: int
    normalization: np.ndarray | None = None  # (n_features, 2) [min, max]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(path, schema: DatasetSchema) -> Dataset:
    """Parse a delimited file into a raw (un-normalized) Dataset.

    A non-numeric first row is treated as a header.  Labels are remapped to
    0..k-1 in first-appearance order.  Malformed rows (wrong arity, blank or
    non-numeric fields) raise CsvParseError with the 1-based row number.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh, delimiter=schema.delimiter)]
    # drop fully blank lines (trailing newlines etc.)
    rows = [(i + 1, row) for i, row in enumerate(rows) if any(cell.strip() for cell in row)]
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")

    expected_cols = schema.n_features + 1 + len(schema.drop_columns)
    header = None
    first_number, first_row = rows[0]
    if any(not _is_number(cell) for cell in first_row):
        header = [cell.strip() for cell in first_row]
        if len(header) != expected_cols:
            raise CsvParseError(path, first_number, f"expected {expected_cols} columns, found {len(header)}")
        rows = rows[1:]
        if not rows:
            raise EmptyDatasetError(f"{path}: header only, no data rows")

    label_col = schema.label_column % expected_cols
    dropped = set(schema.drop_columns)
    feature_cols = [c for c in range(expected_cols) if c != label_col and c not in dropped]
    if len(feature_cols) != schema.n_features:
        raise DatasetError(f"schema {schema.name!r} is inconsistent: {len(feature_cols)} feature columns")

    features = np.empty((len(rows), schema.n_features), dtype=np.float64)
    raw_labels = []
    for out_i, (row_number, row) in enumerate(rows):
        if len(row) != expected_cols:
            raise CsvParseError(path, row_number, f"expected {expected_cols} columns, found {len(row)}")
        for j, c in enumerate(feature_cols):
            cell = row[c].strip()
            if not _is_number(cell):
                raise CsvParseError(path, row_number, f"non-numeric feature value {cell!r} in column {c}")
            value = float(cell)
            if not math.isfinite(value):
                raise CsvParseError(path, row_number, f"non-finite feature value in column {c}")
            features[out_i, j] = value
        raw_labels.append(row[label_col].strip())

    # remap labels to 0..k-1 in first-appearance order
    mapping: dict[str, int] = {}
    labels = np.empty(len(raw_labels), dtype=np.int64)
    for i, token in enumerate(raw_labels):
        if token not in mapping:
            mapping[token] = len(mapping)
        labels[i] = mapping[token]
    if len(mapping) != schema.n_classes:
        raise DatasetError(
            f"{path}: found {len(mapping)} classes, schema {schema.name!r} declares {schema.n_classes}"
        )

    if header is not None:
        names = tuple(header[c] for c in feature_cols)
    else:
        names = tuple(f"f{j}" for j in range(schema.n_features))
    return Dataset(
        name=schema.name,
        features=features,
        labels=labels,
        feature_names=names,
        n_classes=schema.n_classes,
    )


def split(ds: Dataset, test_fraction: float, seed: int) -> Split:
    """Stratified train/test split, deterministic for a fixed seed.

    The total test size is ceil(n * test_fraction), apportioned across
    classes by largest remainder, so each class's test share differs from the
    global fraction by less than one sample.
    """
    if ds.n_samples == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = ds.n_samples
    n_test = math.ceil(n * test_fraction)
    if n_test >= n or n_test == 0:
        raise DatasetError(f"test_fraction {test_fraction} leaves an empty side for n={n}")

    class_indices = [np.flatnonzero(ds.labels == c) for c in range(ds.n_classes)]
    quotas = [len(idx) * n_test / n for idx in class_indices]
    counts = [math.floor(q) for q in quotas]
    # keep at least one training sample per class when the class allows it
    caps = [max(0, len(idx) - 1) if len(idx) > 1 else len(idx) for idx in class_indices]
    counts = [min(c, cap) for c, cap in zip(counts, caps)]
    remainder_order = sorted(
        range(ds.n_classes),
        key=lambda c: (-(quotas[c] - math.floor(quotas[c])), -len(class_indices[c]), c),
    )
    deficit = n_test - sum(counts)
    while deficit > 0:
        progressed = False
        for c in remainder_order:
            if deficit == 0:
                break
            if counts[c] < caps[c]:
                counts[c] += 1
                deficit -= 1
                progressed = True
        if not progressed:
            raise DatasetError("cannot satisfy test_fraction under stratification caps")

    rng = np.random.default_rng(np.random.SeedSequence([seed, n]))
    test_parts = []
    train_parts = []
    for c in range(ds.n_classes):
        idx = class_indices[c].copy()
        rng.shuffle(idx)
        test_parts.append(idx[: counts[c]])
        train_parts.append(idx[counts[c] :])
    test_idx = np.sort(np.concatenate(test_parts))
    train_idx = np.sort(np.concatenate(train_parts))
    return Split(train_indices=train_idx, test_indices=test_idx, seed=seed)


def normalize(ds: Dataset, stats_source: Split) -> Dataset:
    """Rescale every row with per-feature min/max taken from the training rows.

    Test rows are transformed with the same statistics and not clipped.
    A constant training column raises ConstantFeatureError naming it.
    """
    if len(stats_source.train_indices) == 0:
        raise DatasetError("normalization requires a non-empty training side")
    train = ds.features[stats_source.train_indices]
    lo = train.min(axis=0)
    hi = train.max(axis=0)
    for j in range(ds.n_features):
        if lo[j] == hi[j]:
            raise ConstantFeatureError(ds.feature_names[j])
    scaled = (ds.features - lo) / (hi - lo)
    stats = np.stack([lo, hi], axis=1)
    return replace(ds, features=scaled, normalization=stats)


def denormalize(ds: Dataset, values: np.ndarray) -> np.ndarray:
    """Map normalized feature rows back to the raw scale."""
    if ds.normalization is None:
        raise DatasetError("dataset is not normalized")
    lo = ds.normalization[:, 0]
    hi = ds.normalization[:, 1]
    return np.asarray(values) * (hi - lo) + lo


def load_dataset(name: str, data_dir, test_fraction: float = 0.1, seed: int = 0):
    """Load a named dataset, split it and normalize with train statistics.

    Returns (dataset, split) with the dataset already normalized.
    """
    if name not in BUILTIN_SCHEMAS:
        raise DatasetError(f"unknown dataset {name!r}; expected one of {', '.join(DATASET_NAMES)}")
    schema = BUILTIN_SCHEMAS[name]
    ds = load_csv(Path(data_dir) / f"{name}.csv", schema)
    sp = split(ds, test_fraction, seed)
    return normalize(ds, sp), sp
