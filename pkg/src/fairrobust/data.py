"""Typed tabular datasets: schema, CSV ingestion, splitting and standardization.

A :class:`Dataset` stores every column (features followed by the label) in a
single float matrix.  Column kinds come from the :class:`Schema`, which is the
only place that knows which feature is sensitive and which column is the label.
"""
from __future__ import annotations

import csv
import enum
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised when input data does not conform to its schema."""


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    pass


class InvalidBoolean(DataError):
    pass


class NegativeCount(DataError):
    pass


class DegenerateSplitWarning(UserWarning):
    """A split part lacks one of the label values or one of the sensitive groups."""


class FeatureKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    COUNT = "count"
    BOOLEAN = "boolean"


@dataclass(frozen=True)
class Schema:
    features: tuple[tuple[str, FeatureKind], ...]
    sensitive: str
    label: str

    def __post_init__(self):
        features = tuple((str(n), FeatureKind(k)) for n, k in self.features)
        object.__setattr__(self, "features", features)
        names = [n for n, _ in features]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if self.label in names:
            raise DataError(f"label {self.label!r} must not be listed among features")
        if self.sensitive == self.label:
            raise DataError("sensitive feature and label must differ")
        if self.sensitive not in names:
            raise DataError(f"sensitive feature {self.sensitive!r} not in features")
        if dict(features)[self.sensitive] is not FeatureKind.BOOLEAN:
            raise DataError("sensitive feature must be boolean")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.features)

    @property
    def columns(self) -> tuple[str, ...]:
        """All column names, label last."""
        return self.feature_names + (self.label,)

    @property
    def kinds(self) -> tuple[FeatureKind, ...]:
        return tuple(k for _, k in self.features) + (FeatureKind.BOOLEAN,)

    def kind_of(self, name: str) -> FeatureKind:
        if name == self.label:
            return FeatureKind.BOOLEAN
        return dict(self.features)[name]

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise MissingColumn(f"unknown column {name!r}") from None

    def to_dict(self) -> dict:
        return {
            "features": [{"name": n, "kind": k.value} for n, k in self.features],
            "sensitive": self.sensitive,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        feats = []
        for item in d["features"]:
            if isinstance(item, dict):
                feats.append((item["name"], item["kind"]))
            else:
                feats.append(tuple(item))
        return cls(tuple(feats), d["sensitive"], d["label"])


def load_schema(path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_dict(json.load(fh))


def save_schema(schema: Schema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


def _check_column(name: str, kind: FeatureKind, col: np.ndarray) -> None:
    if not np.all(np.isfinite(col)):
        raise ParseError(f"column {name!r} contains missing or non-finite values")
    if kind is FeatureKind.BOOLEAN:
        bad = ~np.isin(col, (0.0, 1.0))
        if bad.any():
            raise InvalidBoolean(f"column {name!r} has value {col[bad][0]!r} outside {{0, 1}}")
    elif kind is FeatureKind.COUNT:
        if (col < 0).any():
            raise NegativeCount(f"column {name!r} has a negative count")
        if (col != np.round(col)).any():
            raise ParseError(f"column {name!r} has a non-integer count")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of ``n`` rows; ``values[:, -1]`` is the label."""

    schema: Schema
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2 or values.shape[1] != len(self.schema.columns):
            raise DataError(
                f"expected {len(self.schema.columns)} columns, got shape {values.shape}"
            )
        for j, (name, kind) in enumerate(zip(self.schema.columns, self.schema.kinds)):
            _check_column(name, kind, values[:, j])
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def X(self) -> np.ndarray:
        return self.values[:, :-1]

    @property
    def y(self) -> np.ndarray:
        return self.values[:, -1]

    @property
    def sensitive(self) -> np.ndarray:
        return self.column(self.schema.sensitive)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        return self.values[:, [self.schema.index(c) for c in names]]

    def take(self, rows) -> "Dataset":
        return Dataset(self.schema, self.values[np.asarray(rows, dtype=int)])

    def mask(self, keep: np.ndarray) -> "Dataset":
        return Dataset(self.schema, self.values[np.asarray(keep, dtype=bool)])

    @property
    def degenerate(self) -> bool:
        """True when either label value or either sensitive group is absent."""
        if self.n == 0:
            return True
        y, s = self.y, self.sensitive
        return not (0 < y.sum() < self.n and 0 < s.sum() < self.n)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema == other.schema and np.array_equal(self.values, other.values)

    __hash__ = None


def _parse_cell(text: str, name: str, kind: FeatureKind, line: int) -> float:
    text = text.strip()
    if text == "":
        raise ParseError(f"missing value in column {name!r} on line {line}")
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} in column {name!r} on line {line}") from None
    if kind is FeatureKind.BOOLEAN and v not in (0.0, 1.0):
        raise InvalidBoolean(f"value {text!r} in boolean column {name!r} on line {line}")
    if kind is FeatureKind.COUNT and v < 0:
        raise NegativeCount(f"negative count {text!r} in column {name!r} on line {line}")
    return v


def load_csv(path, schema: Schema) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {missing}")
        pos = [header.index(c) for c in schema.columns]
        kinds = schema.kinds
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ParseError(f"{path}: line {lineno} has {len(rec)} cells, expected {len(header)}")
            rows.append([
                _parse_cell(rec[p], c, k, lineno)
                for p, c, k in zip(pos, schema.columns, kinds)
            ])
    values = np.array(rows, dtype=float).reshape(len(rows), len(schema.columns))
    return Dataset(schema, values)


def _format(v: float, kind: FeatureKind) -> str:
    if kind is not FeatureKind.CONTINUOUS:
        return str(int(v))
    return repr(float(v))


def write_csv(d: Dataset, path) -> None:
    kinds = d.schema.kinds
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.schema.columns)
        for row in d.values:
            w.writerow([_format(v, k) for v, k in zip(row, kinds)])


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3 or any(not 0 < f < 1 for f in self.fractions):
            raise ValueError("split fractions must be three values in (0, 1)")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def split(d: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle rows with ``spec.seed`` and cut them into train/validation/test.

    Parts that miss a label value or a sensitive group raise a
    :class:`DegenerateSplitWarning`; callers can check ``part.degenerate``.
    """
    if d.n < 10:
        raise DataError(f"need at least 10 rows to split, got {d.n}")
    perm = np.random.default_rng(spec.seed).permutation(d.n)
    n_train = int(round(d.n * spec.fractions[0]))
    n_val = int(round(d.n * spec.fractions[1]))
    parts = (
        d.take(perm[:n_train]),
        d.take(perm[n_train:n_train + n_val]),
        d.take(perm[n_train + n_val:]),
    )
    for name, part in zip(("train", "validation", "test"), parts):
        if part.degenerate:
            warnings.warn(f"{name} part is degenerate (missing a label or sensitive value)",
                          DegenerateSplitWarning, stacklevel=2)
    return parts


@dataclass(frozen=True)
class ScalerParams:
    """Per-column shift and scale; booleans and zero-sd columns keep scale 1 internally."""

    columns: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    scaled: np.ndarray  # bool mask of columns that were standardized

    def _scale(self) -> np.ndarray:
        return np.where(self.scaled & (self.sd > 0), self.sd, 1.0)

    def _shift(self) -> np.ndarray:
        return np.where(self.scaled, self.mean, 0.0)

    def transform_array(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self._shift()) / self._scale()

    def inverse_array(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self._scale() + self._shift()

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "scaled": self.scaled.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(tuple(d["columns"]), np.array(d["mean"], float), np.array(d["sd"], float),
                   np.array(d["scaled"], bool))


def fit_scaler(values: np.ndarray, columns: Sequence[str], kinds: Iterable[FeatureKind]) -> ScalerParams:
    values = np.asarray(values, dtype=float)
    scaled = np.array([k is not FeatureKind.BOOLEAN for k in kinds], dtype=bool)
    mean = values.mean(axis=0) if len(values) else np.zeros(values.shape[1])
    sd = values.std(axis=0) if len(values) else np.zeros(values.shape[1])
    # float noise on constant columns must not turn into a tiny nonzero sd
    sd = np.where(np.ptp(values, axis=0) == 0, 0.0, sd) if len(values) else sd
    return ScalerParams(tuple(columns), mean, sd, scaled)


def standardize(d: Dataset) -> tuple[np.ndarray, ScalerParams]:
    """Standardize continuous and count columns to mean 0, sd 1.

    Returns the transformed matrix (all columns, label last) rather than a
    :class:`Dataset`, since standardized count/boolean-free values no longer
    satisfy the schema's kind checks.
    """
    params = fit_scaler(d.values, d.schema.columns, d.schema.kinds)
    return params.transform_array(d.values), params


def make_dataset(schema: Schema, columns: dict[str, np.ndarray]) -> Dataset:
    """Assemble a dataset from a name -> column mapping (label included)."""
    n = {len(np.asarray(v)) for v in columns.values()}
    if len(n) != 1:
        raise DataError("columns differ in length")
    try:
        values = np.column_stack([np.asarray(columns[c], dtype=float) for c in schema.columns])
    except KeyError as e:
        raise MissingColumn(f"missing column {e.args[0]!r}") from None
    return Dataset(schema, values)


def empty_like(d: Dataset) -> Dataset:
    return Dataset(d.schema, np.empty((0, len(d.schema.columns))))


__all__ = [
    "DataError", "MissingColumn", "ParseError", "InvalidBoolean", "NegativeCount",
    "DegenerateSplitWarning", "FeatureKind", "Schema", "Dataset", "SplitSpec", "ScalerParams",
    "load_schema", "save_schema", "load_csv", "write_csv", "split", "standardize",
    "fit_scaler", "make_dataset", "empty_like",
]
