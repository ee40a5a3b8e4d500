"""Dataset ingestion, encoding, scaling, splitting and the profiling perturbation.

Tables come in as CSV, nominal columns are one-hot encoded in first-appearance
order, and numeric columns are standardized with a per-column (mean, sd) pair
(sample sd, ``N - 1`` denominator).  Everything here is a pure function of its
inputs and seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ._rng import make_rng

NUMERIC = "numeric"
NOMINAL = "nominal"


class DataError(ValueError):
    """Raised for malformed tables and impossible data operations."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawTable:
    """Parsed CSV records.

    ``rows`` hold every field (label included) as a string; ``columns`` lists
    the feature columns only, with their inferred kind.
    """

    rows: list[dict[str, str]]
    columns: list[tuple[str, str]]
    label_column: str

    @property
    def labels(self) -> list[str]:
        return [r[self.label_column] for r in self.rows]


@dataclass(frozen=True)
class EncodingSpec:
    """Fitted column encoding.

    ``columns`` holds ``(name, kind, categories)`` per raw feature column;
    ``categories`` is ``None`` for numeric passthrough columns.
    """

    columns: tuple[tuple[str, str, tuple[str, ...] | None], ...]
    labels: tuple[str, ...]

    @classmethod
    def fit(cls, table: RawTable) -> "EncodingSpec":
        cols = []
        for name, kind in table.columns:
            if kind == NUMERIC:
                cols.append((name, kind, None))
            else:
                cols.append((name, kind, tuple(dict.fromkeys(r[name] for r in table.rows))))
        return cls(tuple(cols), tuple(dict.fromkeys(table.labels)))

    @property
    def n_features(self) -> int:
        return sum(1 if cats is None else len(cats) for _, _, cats in self.columns)

    @property
    def numeric_mask(self) -> np.ndarray:
        mask = []
        for _, _, cats in self.columns:
            mask.extend([True] if cats is None else [False] * len(cats))
        return np.array(mask, dtype=bool)

    @property
    def feature_names(self) -> list[str]:
        names = []
        for name, _, cats in self.columns:
            names.extend([name] if cats is None else [f"{name}={c}" for c in cats])
        return names

    def transform(self, table: RawTable) -> np.ndarray:
        """Encode feature columns; an unseen category yields an all-zero block."""
        X = np.zeros((len(table.rows), self.n_features))
        j = 0
        for name, _, cats in self.columns:
            if cats is None:
                X[:, j] = [float(r[name]) for r in table.rows]
                j += 1
                continue
            pos = {c: i for i, c in enumerate(cats)}
            for i, r in enumerate(table.rows):
                p = pos.get(r[name])
                if p is not None:
                    X[i, j + p] = 1.0
            j += len(cats)
        return X

    def encode_labels(self, values: Sequence[str]) -> np.ndarray:
        pos = {c: i for i, c in enumerate(self.labels)}
        try:
            return np.array([pos[v] for v in values], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"unknown label {exc.args[0]!r}") from None

    def decode_labels(self, y: Sequence[int]) -> list[str]:
        return [self.labels[int(i)] for i in y]


@dataclass(frozen=True)
class Scaler:
    """Per-feature (mean, sd) for numeric columns; one-hot columns pass through."""

    mean: np.ndarray
    sd: np.ndarray
    numeric_mask: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, numeric_mask: np.ndarray) -> "Scaler":
        X = np.asarray(X, dtype=float)
        mask = np.asarray(numeric_mask, dtype=bool)
        mean = np.zeros(X.shape[1])
        sd = np.ones(X.shape[1])
        if X.shape[0] > 0:
            mean[mask] = X[:, mask].mean(axis=0)
        if X.shape[0] > 1:
            s = X[:, mask].std(axis=0, ddof=1)
            sd[mask] = np.where(s > 0, s, 1.0)
        return cls(_frozen(mean), _frozen(sd), _frozen(mask))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=float)
        m = self.numeric_mask
        X[:, m] = (X[:, m] - self.mean[m]) / self.sd[m]
        return X


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    encoder: EncodingSpec
    scaler: Scaler
    classes: tuple[str, ...] = ()
    standardized: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "X", _frozen(np.asarray(self.X, dtype=float)))
        object.__setattr__(self, "y", _frozen(np.asarray(self.y, dtype=np.int64)))
        if not self.classes:
            object.__setattr__(self, "classes", self.encoder.labels)
        if not np.all(np.isfinite(self.X)):
            raise DataError("X contains non-finite values")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise DataError("label index out of range")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def numeric_mask(self) -> np.ndarray:
        return self.encoder.numeric_mask

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, X=self.X[idx], y=self.y[idx])


@dataclass(frozen=True)
class SplitPlan:
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int = field(default=0)


def _is_real(s: str) -> bool:
    try:
        return math.isfinite(float(s))
    except ValueError:
        return False


def load_csv(path, label_column: str) -> RawTable:
    """Read a headed, comma-separated UTF-8 file and infer column kinds.

    A column is numeric iff every one of its values parses as a finite real.
    Missing (empty) values are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"empty table: {path}") from None
        if label_column not in header:
            raise DataError(f"missing label column {label_column!r} in {path}")
        if len(set(header)) != len(header):
            raise DataError(f"duplicate column names in {path}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not v.strip() for v in rec):
                continue
            if len(rec) != len(header):
                raise DataError(
                    f"ragged row at line {lineno}: {len(rec)} fields, header has {len(header)}"
                )
            vals = [v.strip() for v in rec]
            for name, v in zip(header, vals):
                if v == "":
                    raise DataError(f"missing value at line {lineno}, column {name!r}")
            rows.append(dict(zip(header, vals)))
    if not rows:
        raise DataError(f"empty table: {path}")
    if len({r[label_column] for r in rows}) < 2:
        raise DataError(f"label column {label_column!r} has fewer than 2 distinct values")
    columns = [
        (name, NUMERIC if all(_is_real(r[name]) for r in rows) else NOMINAL)
        for name in header
        if name != label_column
    ]
    return RawTable(rows=rows, columns=columns, label_column=label_column)


def encode(table: RawTable, name: str = "") -> Dataset:
    """One-hot encode nominal columns and map labels to ``[0, C)``.

    The returned dataset is *not* standardized yet; its scaler is fitted on the
    numeric columns of the full table.
    """
    spec = EncodingSpec.fit(table)
    X = spec.transform(table)
    y = spec.encode_labels(table.labels)
    return Dataset(
        X=X,
        y=y,
        n_classes=len(spec.labels),
        encoder=spec,
        scaler=Scaler.fit(X, spec.numeric_mask),
        name=name,
    )


def load_dataset(path, label_column: str) -> Dataset:
    return encode(load_csv(path, label_column), name=Path(path).stem)


def standardize(ds: Dataset, scaler: Scaler | None = None) -> Dataset:
    """Apply ``(x - mean) / sd`` to the numeric columns; one-hot columns are untouched."""
    if ds.standardized:
        raise DataError("dataset is already standardized")
    scaler = scaler or ds.scaler
    return replace(ds, X=scaler.transform(ds.X), scaler=scaler, standardized=True)


def _labels_of(ds) -> np.ndarray:
    return ds.y if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.int64)


def stratified_split(ds, test_fraction: float, seed: int) -> SplitPlan:
    """Per-class shuffled split; each class contributes ``round(n_c * f)`` test rows.

    The per-class test count is clamped to ``[1, n_c - 1]`` so that both parts
    see every class.  ``ds`` may be a :class:`Dataset` or a label vector.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    y = _labels_of(ds)
    rng = make_rng(seed, "stratified_split")
    test = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < 2:
            raise DataError(f"unstratifiable: class {int(c)} has a single sample")
        n_test = min(max(int(math.floor(idx.size * test_fraction + 0.5)), 1), idx.size - 1)
        test.append(rng.permutation(idx)[:n_test])
    test_idx = np.sort(np.concatenate(test))
    train_idx = np.setdiff1d(np.arange(y.size), test_idx)
    return SplitPlan(_frozen(train_idx), _frozen(test_idx), seed)


def stratified_folds(y, n_folds: int, seed: int) -> np.ndarray:
    """Fold id in ``[0, n_folds)`` for every sample, balanced within each class.

    ``n_folds == N`` is leave-one-out: every sample gets its own fold.
    """
    y = _labels_of(y)
    if n_folds < 2:
        raise DataError("n_folds must be >= 2")
    rng = make_rng(seed, "stratified_folds")
    if n_folds == y.size:
        return rng.permutation(y.size).astype(np.int64)
    fold = np.empty(y.size, dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < n_folds:
            raise DataError(
                f"class {int(c)} has {idx.size} samples, fewer than {n_folds} folds"
            )
        fold[rng.permutation(idx)] = (np.arange(idx.size) + offset) % n_folds
        offset += idx.size
    return fold


def downsample(ds: Dataset, max_n: int, seed: int) -> Dataset:
    """Uniform sample of ``max_n`` rows without replacement (identity if ``N <= max_n``).

    Classes that vanish from the sample are dropped and the remaining labels
    are renumbered in their original order.
    """
    if max_n < ds.n_classes:
        raise DataError(f"max_n={max_n} is smaller than the class count {ds.n_classes}")
    if ds.n_samples <= max_n:
        return ds
    rng = make_rng(seed, "downsample")
    idx = np.sort(rng.choice(ds.n_samples, size=max_n, replace=False))
    sub = ds.subset(idx)
    present = np.unique(sub.y)
    if present.size == ds.n_classes:
        return sub
    remap = np.full(ds.n_classes, -1, dtype=np.int64)
    remap[present] = np.arange(present.size)
    return replace(
        sub,
        y=remap[sub.y],
        n_classes=int(present.size),
        classes=tuple(ds.classes[i] for i in present),
    )


def perturb(X: np.ndarray, delta: float, seed: int) -> np.ndarray:
    """``X + E`` with ``E`` i.i.d. ``N(0, delta**2)``, drawn from a Philox stream."""
    X = np.asarray(X, dtype=float)
    if delta < 0:
        raise DataError("delta must be >= 0")
    if delta == 0:
        return X.copy()
    noise = make_rng(seed, "perturb").standard_normal(X.shape)
    return X + delta * noise
