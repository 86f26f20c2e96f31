"""Tabular ingestion: CSV loading, column roles, and feature encoding.

Raw columns are kept as numpy arrays. Continuous columns are ``float64`` with
``NaN`` standing in for a missing cell; categorical columns are ``object``
arrays of ``str`` with ``None`` for a missing cell.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ROLES = ("feature", "attribute", "label", "ignore")
KINDS = ("continuous", "categorical")

#: value written into a continuous feature cell that was missing
MISSING_PLACEHOLDER = -1.0
MAX_ONE_HOT_LEVELS = 1000


class DatasetError(ValueError):
    """Raised for unreadable, malformed or inconsistent input data."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    role: str
    kind: str = "continuous"
    missing_token: str = ""
    # optional discretization overrides, used only for attribute/label columns
    bin_width: float | None = None
    bin_edges: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.name:
            raise DatasetError("column name must be non-empty")
        if self.role not in ROLES:
            raise DatasetError(f"column {self.name!r}: role must be one of {ROLES}, got {self.role!r}")
        if self.kind not in KINDS:
            raise DatasetError(f"column {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.bin_width is not None and not self.bin_width > 0:
            raise DatasetError(f"column {self.name!r}: bin_width must be positive")
        if self.bin_edges is not None:
            object.__setattr__(self, "bin_edges", tuple(float(e) for e in self.bin_edges))


def validate_schema(schema: Sequence[ColumnSchema]) -> None:
    names = [c.name for c in schema]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise DatasetError(f"duplicate column names: {dupes}")
    n_label = sum(c.role == "label" for c in schema)
    if n_label != 1:
        raise DatasetError(f"exactly one label column required, found {n_label}")
    if not any(c.role == "feature" for c in schema):
        raise DatasetError("at least one feature column required")


@dataclass(frozen=True)
class CategoricalSeries:
    """Integer-coded category vector with display names for each code."""

    codes: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        names = tuple(str(n) for n in self.names)
        if codes.ndim != 1:
            raise ValueError("codes must be one-dimensional")
        if len(names) < 1:
            raise ValueError("at least one category name required")
        if codes.size and (codes.min() < 0 or codes.max() >= len(names)):
            raise ValueError(f"codes must lie in [0, {len(names)})")
        codes = codes.copy()
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_labels(cls, values: Iterable) -> "CategoricalSeries":
        """Code arbitrary hashable labels; categories are ordered by ``str``."""
        vals = [str(v) for v in values]
        names = sorted(set(vals))
        lookup = {n: i for i, n in enumerate(names)}
        return cls(np.array([lookup[v] for v in vals], dtype=np.int64), tuple(names or ["<empty>"]))

    @property
    def n_categories(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return int(self.codes.size)

    def counts(self) -> np.ndarray:
        return np.bincount(self.codes, minlength=self.n_categories)

    def take(self, idx) -> "CategoricalSeries":
        return CategoricalSeries(self.codes[idx], self.names)


@dataclass(frozen=True, eq=False)
class Dataset:
    columns: Mapping[str, np.ndarray]
    schema: tuple[ColumnSchema, ...]
    features: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()
    fingerprint: str = field(default="")

    def __post_init__(self):
        schema = tuple(self.schema)
        validate_schema(schema)
        object.__setattr__(self, "schema", schema)
        lengths = {len(self.columns[c.name]) for c in schema}
        if len(lengths) != 1:
            raise DatasetError("columns have differing lengths")
        if lengths.pop() < 1:
            raise DatasetError("dataset has no rows")
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float64)
            if feats.shape != (self.n_rows, len(self.feature_names)):
                raise DatasetError("encoded feature matrix does not match row count/feature names")
            feats.flags.writeable = False
            object.__setattr__(self, "features", feats)
        if not self.fingerprint:
            object.__setattr__(self, "fingerprint", _fingerprint(self.columns, schema))

    @property
    def n_rows(self) -> int:
        return len(self.columns[self.schema[0].name])

    @property
    def encoded(self) -> bool:
        return self.features is not None

    def column(self, name: str) -> ColumnSchema:
        for c in self.schema:
            if c.name == name:
                return c
        raise DatasetError(f"unknown column {name!r}")

    @property
    def label_name(self) -> str:
        return next(c.name for c in self.schema if c.role == "label")

    @property
    def label(self) -> np.ndarray:
        return self.columns[self.label_name]

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.schema if c.role == "attribute")

    @property
    def attributes(self) -> dict[str, np.ndarray]:
        return {n: self.columns[n] for n in self.attribute_names}

    @property
    def raw_feature_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.schema if c.role == "feature")


def _fingerprint(columns: Mapping[str, np.ndarray], schema: Sequence[ColumnSchema]) -> str:
    h = hashlib.sha256()
    for c in schema:
        h.update(f"{c.name}\x1e{c.role}\x1e{c.kind}\x1e".encode())
        col = columns[c.name]
        if c.kind == "continuous":
            h.update(np.ascontiguousarray(col, dtype=np.float64).tobytes())
        else:
            h.update("\x1f".join("\x00" if v is None else v for v in col).encode())
    return h.hexdigest()


def is_missing(col: np.ndarray) -> np.ndarray:
    if col.dtype == object:
        return np.array([v is None for v in col], dtype=bool)
    return np.isnan(col)


def make_column(values: Sequence, kind: str) -> np.ndarray:
    """Build a raw column from python values; ``None``/NaN mean missing."""
    if kind == "continuous":
        return np.array([np.nan if v is None else float(v) for v in values], dtype=np.float64)
    out = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        out[i] = None if v is None or (isinstance(v, float) and math.isnan(v)) else str(v)
    return out


def load_csv(path: str | Path, schema: Sequence[ColumnSchema]) -> Dataset:
    path = Path(path)
    schema = tuple(schema)
    validate_schema(schema)
    if not path.is_file():
        raise DatasetError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DatasetError(f"{path}: duplicate header names {dupes}")
        expected = {c.name for c in schema}
        if set(header) != expected:
            missing = sorted(expected - set(header))
            extra = sorted(set(header) - expected)
            raise DatasetError(f"{path}: header mismatch (missing {missing}, unexpected {extra})")
        raw: dict[str, list] = {h: [] for h in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for h, v in zip(header, row):
                raw[h].append(v)
    n = len(raw[header[0]])
    if n == 0:
        raise DatasetError(f"{path}: no data rows")

    columns: dict[str, np.ndarray] = {}
    for c in schema:
        cells = raw[c.name]
        if c.kind == "continuous":
            col = np.empty(n, dtype=np.float64)
            for i, v in enumerate(cells):
                if v == c.missing_token or v.strip() == c.missing_token:
                    col[i] = np.nan
                    continue
                try:
                    col[i] = float(v)
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {i + 2}, column {c.name!r}: cannot parse {v!r} as a number"
                    ) from None
                if not math.isfinite(col[i]):
                    raise DatasetError(f"{path}: row {i + 2}, column {c.name!r}: non-finite value {v!r}")
        else:
            col = np.empty(n, dtype=object)
            for i, v in enumerate(cells):
                col[i] = None if v == c.missing_token else v
        columns[c.name] = col
    return Dataset(columns, schema)


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write the raw columns back out in schema order (missing cells use the column's token)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([c.name for c in ds.schema])
        cols = []
        for c in ds.schema:
            col = ds.columns[c.name]
            if c.kind == "continuous":
                cols.append([c.missing_token if math.isnan(v) else repr(float(v)) for v in col])
            else:
                cols.append([c.missing_token if v is None else v for v in col])
        w.writerows(zip(*cols))


def encode_features(ds: Dataset) -> Dataset:
    """One-hot encode categorical features and add missingness indicators.

    A continuous feature with missing cells gets its gaps filled with
    ``MISSING_PLACEHOLDER`` plus a ``"<name> missing"`` 0/1 column. A categorical
    feature with missing cells gets a ``"<name> missing"`` level inside its
    one-hot group, so every group still sums to one. Already-encoded datasets
    are returned unchanged.
    """
    if ds.encoded:
        return ds
    blocks: list[np.ndarray] = []
    names: list[str] = []
    for c in ds.schema:
        if c.role != "feature":
            continue
        col = ds.columns[c.name]
        miss = is_missing(col)
        if c.kind == "continuous":
            blocks.append(np.where(miss, MISSING_PLACEHOLDER, col)[:, None])
            names.append(c.name)
            if miss.any():
                blocks.append(miss.astype(np.float64)[:, None])
                names.append(f"{c.name} missing")
        else:
            levels = sorted({v for v in col if v is not None})
            if len(levels) > MAX_ONE_HOT_LEVELS:
                raise DatasetError(
                    f"categorical feature {c.name!r} has {len(levels)} distinct values "
                    f"(limit {MAX_ONE_HOT_LEVELS}); is it an identifier column?"
                )
            for lv in levels:
                blocks.append((col == lv).astype(np.float64)[:, None])
                names.append(f"{c.name}={lv}")
            if miss.any():
                blocks.append(miss.astype(np.float64)[:, None])
                names.append(f"{c.name} missing")
    X = np.hstack(blocks) if blocks else np.zeros((ds.n_rows, 0))
    return replace(ds, features=X, feature_names=tuple(names))


def rows_with_attribute(ds: Dataset, attr: str) -> np.ndarray:
    if attr not in ds.attribute_names:
        raise DatasetError(f"unknown attribute {attr!r}")
    return np.flatnonzero(~is_missing(ds.columns[attr]))


def rows_with_all_attributes(ds: Dataset, attrs: Sequence[str]) -> np.ndarray:
    """Strict policy: rows where none of ``attrs`` is missing."""
    keep = np.ones(ds.n_rows, dtype=bool)
    for a in attrs:
        if a not in ds.attribute_names:
            raise DatasetError(f"unknown attribute {a!r}")
        keep &= ~is_missing(ds.columns[a])
    return np.flatnonzero(keep)


def with_extra_feature(ds: Dataset, name: str, values: np.ndarray) -> Dataset:
    """Append one numeric column to an encoded feature matrix."""
    ds = encode_features(ds)
    X = np.hstack([ds.features, np.asarray(values, dtype=np.float64)[:, None]])
    return replace(ds, features=X, feature_names=ds.feature_names + (name,))
