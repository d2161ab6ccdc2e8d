"""CSV loading, encoding and train/test splitting for binary fairness datasets."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RawTable:
    column_names: list
    rows: list

    def __post_init__(self):
        if len(self.column_names) < 3:
            raise ValueError("a table needs at least one feature, a label and a sensitive column")
        width = len(self.column_names)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"ragged row at line {i + 2}")

    def column(self, name):
        j = self.column_names.index(name)
        return [row[j] for row in self.rows]


@dataclass(frozen=True)
class Schema:
    label: str
    sensitive: str
    positive_label: object = None
    features: list | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        return cls(label=d["label"], sensitive=d["sensitive"],
                   positive_label=d.get("positive_label"), features=d.get("features"))

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def feature_columns(self, column_names):
        if self.features is not None:
            return list(self.features)
        return [c for c in column_names if c not in (self.label, self.sensitive)]

    def check(self, column_names):
        for name in [self.label, self.sensitive, *self.feature_columns(column_names)]:
            if name not in column_names:
                raise KeyError(f"unknown column {name!r}")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    s: np.ndarray
    feature_names: list
    standardization: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    index: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y).astype(int)
        s = np.asarray(self.s).astype(int)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError("X width must equal the number of feature names")
        if not (len(y) == len(s) == X.shape[0]):
            raise ValueError("X, y and s differ in length")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        for name, arr in (("y", y), ("s", s)):
            if not np.isin(arr, (0, 1)).all():
                raise ValueError(f"{name} must be binary 0/1")
            if len(np.unique(arr)) < 2:
                raise ValueError(f"{name} is missing one of its two classes")
        index = np.arange(len(y)) if self.index is None else np.asarray(self.index, dtype=int)
        X.setflags(write=False)
        for name, val in (("X", X), ("y", y), ("s", s), ("index", index)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.X[rows], self.y[rows], self.s[rows], list(self.feature_names),
                       self.standardization, self.metadata, self.index[rows])


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")


def _parse_cell(text):
    try:
        return float(text)
    except ValueError:
        return text


def load_csv(path, schema: Schema | dict) -> RawTable:
    """Read a header-first, comma-delimited UTF-8 CSV and check it against ``schema``."""
    if isinstance(schema, dict):
        schema = Schema.from_dict(schema)
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"ragged row at line {lineno}")
            rows.append(tuple(row))
    schema.check(header)
    # numeric columns are those where every cell parses as a float
    numeric = [all(isinstance(_parse_cell(r[j]), float) for r in rows) for j in range(len(header))]
    typed = [tuple(float(c) if numeric[j] else c for j, c in enumerate(r)) for r in rows]
    return RawTable(list(header), typed)


def _binary_map(values, name, positive=None, minority_positive=False):
    distinct = sorted(set(values), key=lambda v: (isinstance(v, str), v))
    if len(distinct) != 2:
        kind = "sensitive attribute" if minority_positive else "label"
        raise ValueError(f"{kind} must be binary: column {name!r} has {len(distinct)} distinct values")
    if positive is not None:
        if isinstance(distinct[0], float) and not isinstance(positive, str):
            positive = float(positive)
        if positive not in distinct:
            raise ValueError(f"positive value {positive!r} not found in column {name!r}")
    elif minority_positive:
        counts = {v: sum(1 for x in values if x == v) for v in distinct}
        # ties go to the value sorting last
        positive = min(reversed(distinct), key=lambda v: counts[v])
    else:
        positive = distinct[-1]
    return np.array([1 if v == positive else 0 for v in values]), positive


def preprocess(raw: RawTable, schema: Schema | dict) -> Dataset:
    """One-hot encode categoricals (no dropped level) and standardize numerics.

    Standardization uses the population standard deviation over the whole
    table. Zero-variance numeric columns become constant 0 with a warning.
    The sensitive column maps its minority value to 1.
    """
    if isinstance(schema, dict):
        schema = Schema.from_dict(schema)
    schema.check(raw.column_names)
    y, pos_label = _binary_map(raw.column(schema.label), schema.label, schema.positive_label)
    s, pos_sens = _binary_map(raw.column(schema.sensitive), schema.sensitive, minority_positive=True)

    cols, names, stats = [], [], {}
    for name in schema.feature_columns(raw.column_names):
        values = raw.column(name)
        if all(isinstance(v, float) for v in values):
            arr = np.array(values, dtype=float)
            mu, sd = float(arr.mean()), float(arr.std())
            if sd == 0.0:
                warnings.warn(f"column {name!r} has zero variance; encoded as constant 0")
                arr = np.zeros_like(arr)
            else:
                arr = (arr - mu) / sd
            stats[name] = (mu, sd)
            cols.append(arr)
            names.append(name)
        else:
            for level in sorted(set(map(str, values))):
                cols.append(np.array([1.0 if str(v) == level else 0.0 for v in values]))
                names.append(f"{name}={level}")
    X = np.column_stack(cols) if cols else np.zeros((len(raw.rows), 0))
    meta = {"label_column": schema.label, "label_positive": pos_label,
            "sensitive_column": schema.sensitive, "sensitive_positive": pos_sens,
            "sensitive_convention": "minority value maps to s=1",
            "standardized_on": "full table"}
    return Dataset(X, y, s, names, stats, meta)


def split(ds: Dataset, spec: SplitSpec, refit_on_train: bool = False):
    """Seeded shuffle split into (train, test).

    With ``refit_on_train`` the numeric columns are re-standardized using
    train statistics only (both halves get the same transform).
    """
    if ds.n < 10:
        raise ValueError("dataset too small to split (need at least 10 rows)")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(ds.n)
    n_train = int(round(ds.n * spec.train_fraction))
    tr_rows, te_rows = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    for part, rows in (("train", tr_rows), ("test", te_rows)):
        if len(np.unique(ds.y[rows])) < 2 or len(np.unique(ds.s[rows])) < 2:
            raise ValueError(f"{part} split lacks a label or sensitive class; try a different seed")
    train, test = ds.subset(tr_rows), ds.subset(te_rows)
    if refit_on_train:
        train, test = _restandardize(train, test)
    return train, test


def _restandardize(train: Dataset, test: Dataset):
    Xtr, Xte = np.array(train.X), np.array(test.X)
    stats = {}
    for name, (mu0, sd0) in train.standardization.items():
        j = train.feature_names.index(name)
        raw_tr = Xtr[:, j] * sd0 + mu0
        raw_te = Xte[:, j] * sd0 + mu0
        mu, sd = float(raw_tr.mean()), float(raw_tr.std())
        sd = sd if sd > 0 else 1.0
        Xtr[:, j] = (raw_tr - mu) / sd
        Xte[:, j] = (raw_te - mu) / sd
        stats[name] = (mu, sd)
    meta = dict(train.metadata, standardized_on="train split")
    return (Dataset(Xtr, train.y, train.s, train.feature_names, stats, meta, train.index),
            Dataset(Xte, test.y, test.s, test.feature_names, stats, meta, test.index))
