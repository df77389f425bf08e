"""Tabular dataset ingestion, min-max normalization and stratified splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml


class DatasetError(ValueError):
    """Raised for malformed input files, schemas or split requests."""


@dataclass(frozen=True)
class FeatureSchema:
    """Declaration of one feature column.

    ``recode`` optionally maps raw strings of a nominal column onto
    (possibly merged) category labels before indexing; unmapped strings
    pass through unchanged.
    """

    name: str
    kind: str  # "numeric" | "nominal"
    id_label: str = ""
    protected: bool = False
    categories: tuple[str, ...] = ()
    recode: dict[str, str] | None = None

    def __post_init__(self):
        if self.kind not in ("numeric", "nominal"):
            raise DatasetError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "numeric" and self.categories:
            raise DatasetError(f"feature {self.name!r}: numeric features carry no categories")
        if len(set(self.categories)) != len(self.categories):
            raise DatasetError(f"feature {self.name!r}: duplicate categories")
        if any(c == "" for c in self.categories):
            raise DatasetError(f"feature {self.name!r}: empty category label")

    @property
    def nominal(self) -> bool:
        return self.kind == "nominal"

    @property
    def fid(self) -> str:
        return self.id_label or self.name


@dataclass(frozen=True)
class LabelSchema:
    name: str = "label"
    classes: tuple[str, ...] = ()


@dataclass(frozen=True)
class TableSchema:
    """Feature schemas plus label column and default file-format options."""

    features: tuple[FeatureSchema, ...]
    label: LabelSchema = field(default_factory=LabelSchema)
    delimiter: str = ","
    header: bool = False
    skip_initial_space: bool = False

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DatasetError("feature names must be unique")
        if not self.features:
            raise DatasetError("schema declares no features")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable mixed-type table.

    ``X`` holds real values for numeric columns and category indices
    (as floats) for nominal columns; ``y`` holds class indices into
    ``class_names``.
    """

    schema: tuple[FeatureSchema, ...]
    X: np.ndarray
    y: np.ndarray
    class_names: tuple[str, ...]
    label_name: str = "label"

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise DatasetError("X must be n x m with m equal to the schema length")
        if X.shape[0] == 0 or X.shape[1] == 0:
            raise DatasetError("dataset must have n > 0 rows and m > 0 features")
        if y.shape != (X.shape[0],):
            raise DatasetError("one label per row required")
        if y.min() < 0 or y.max() >= len(self.class_names):
            raise DatasetError("labels must index class_names")
        if not np.all(np.isfinite(X)):
            raise DatasetError("missing or non-finite cells")
        for j, f in enumerate(self.schema):
            if f.nominal:
                col = X[:, j]
                if np.any(col != np.round(col)) or col.min() < 0 or col.max() >= len(f.categories):
                    raise DatasetError(f"column {f.name!r}: invalid category index")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def feature_ids(self) -> list[str]:
        return [f.fid for f in self.schema]

    @property
    def nominal_mask(self) -> np.ndarray:
        return np.array([f.nominal for f in self.schema], dtype=bool)

    @property
    def protected_ids(self) -> list[str]:
        return [f.fid for f in self.schema if f.protected]

    def index_of(self, fid: str) -> int:
        for j, f in enumerate(self.schema):
            if f.fid == fid or f.name == fid:
                return j
        raise KeyError(fid)

    def take(self, rows) -> "Dataset":
        """Row subset as a new Dataset (a 'view' in the pipeline sense)."""
        rows = np.asarray(rows, dtype=np.int64)
        return replace(self, X=self.X[rows], y=self.y[rows])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.class_names == other.class_names
            and self.label_name == other.label_name
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    @property
    def pool(self) -> np.ndarray:
        """Train and validation rows combined, sorted."""
        return np.sort(np.concatenate([self.train, self.validation]))


def load_schema(path) -> TableSchema:
    """Read a YAML (or JSON) schema sidecar."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return schema_from_dict(raw)


def schema_from_dict(raw: dict) -> TableSchema:
    feats = []
    for i, f in enumerate(raw.get("features", [])):
        try:
            feats.append(
                FeatureSchema(
                    name=str(f["name"]),
                    kind=str(f.get("kind", "numeric")),
                    id_label=str(f.get("id", f"F{i + 1}")),
                    protected=bool(f.get("protected", False)),
                    categories=tuple(str(c) for c in f.get("categories", ()) or ()),
                    recode={str(k): str(v) for k, v in f["recode"].items()} if f.get("recode") else None,
                )
            )
        except KeyError as exc:
            raise DatasetError(f"schema feature {i}: missing field {exc}") from None
    lab = raw.get("label", {}) or {}
    label = LabelSchema(
        name=str(lab.get("name", "label")),
        classes=tuple(str(c) for c in lab.get("classes", ()) or ()),
    )
    return TableSchema(
        features=tuple(feats),
        label=label,
        delimiter=raw.get("delimiter", ","),
        header=bool(raw.get("header", False)),
        skip_initial_space=bool(raw.get("skip_initial_space", False)),
    )


def load_csv(
    path,
    schema: TableSchema | Sequence[FeatureSchema],
    delimiter: str | None = None,
    header: bool | None = None,
    skip_initial_space: bool | None = None,
) -> Dataset:
    """Parse a delimited file into a Dataset; the label is the last column.

    Format options default to the ones stored in ``schema``. Nominal strings
    not listed in a feature's categories are appended in first-seen order.
    Blank lines are ignored.
    """
    if not isinstance(schema, TableSchema):
        schema = TableSchema(features=tuple(schema))
    delimiter = schema.delimiter if delimiter is None else delimiter
    header = schema.header if header is None else header
    skip = schema.skip_initial_space if skip_initial_space is None else skip_initial_space

    feats = schema.features
    m = len(feats)
    cats = [list(f.categories) for f in feats]
    lookup = [{c: k for k, c in enumerate(cs)} for cs in cats]
    classes = list(schema.label.classes)
    class_lookup = {c: k for k, c in enumerate(classes)}

    rows: list[list[float]] = []
    labels: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter, skipinitialspace=skip)
        if header:
            next(reader, None)
        for rec in reader:
            if not rec or all(not s.strip() for s in rec):
                continue
            r = len(rows)
            where = f"row {r} (line {reader.line_num})"
            if len(rec) != m + 1:
                raise DatasetError(f"{where}: expected {m + 1} fields, got {len(rec)}")
            vals = []
            for j, (f, cell) in enumerate(zip(feats, rec)):
                cell = cell.strip()
                if cell == "":
                    raise DatasetError(f"{where}, column {f.name!r}: missing value")
                if f.nominal:
                    if f.recode:
                        cell = f.recode.get(cell, cell)
                    k = lookup[j].get(cell)
                    if k is None:
                        k = len(cats[j])
                        cats[j].append(cell)
                        lookup[j][cell] = k
                    vals.append(float(k))
                else:
                    try:
                        v = float(cell)
                    except ValueError:
                        raise DatasetError(
                            f"{where}, column {f.name!r}: cannot parse {cell!r} as a number"
                        ) from None
                    if not math.isfinite(v):
                        raise DatasetError(f"{where}, column {f.name!r}: non-finite value")
                    vals.append(v)
            lab = rec[m].strip()
            if lab == "":
                raise DatasetError(f"{where}, label column: missing value")
            k = class_lookup.get(lab)
            if k is None:
                k = len(classes)
                classes.append(lab)
                class_lookup[lab] = k
            rows.append(vals)
            labels.append(k)
    if not rows:
        raise DatasetError(f"{path}: no rows")
    new_schema = tuple(
        replace(f, categories=tuple(cs)) if f.nominal else f for f, cs in zip(feats, cats)
    )
    return Dataset(
        schema=new_schema,
        X=np.array(rows, dtype=np.float64),
        y=np.array(labels, dtype=np.int64),
        class_names=tuple(classes),
        label_name=schema.label.name,
    )


def write_csv(ds: Dataset, path, delimiter: str = ",", header: bool = True) -> None:
    """Write a dataset with category labels and round-trippable floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if header:
            w.writerow([f.name for f in ds.schema] + [ds.label_name])
        for row, lab in zip(ds.X, ds.y):
            out = [
                f.categories[int(v)] if f.nominal else repr(float(v))
                for f, v in zip(ds.schema, row)
            ]
            out.append(ds.class_names[lab])
            w.writerow(out)


def table_schema_of(ds: Dataset, delimiter: str = ",", header: bool = True) -> TableSchema:
    return TableSchema(
        features=ds.schema,
        label=LabelSchema(ds.label_name, ds.class_names),
        delimiter=delimiter,
        header=header,
    )


def normalize_numeric(ds: Dataset) -> Dataset:
    """Min-max scale numeric columns to [0, 1]; constant columns become 0."""
    X = np.array(ds.X)
    for j, f in enumerate(ds.schema):
        if f.nominal:
            continue
        col = X[:, j]
        lo, hi = col.min(), col.max()
        X[:, j] = (col - lo) / (hi - lo) if hi > lo else 0.0
    return replace(ds, X=X)


def subsample(ds: Dataset, n_rows: int, seed: int) -> Dataset:
    """Seeded row subsample without replacement, original order kept."""
    if n_rows >= ds.n:
        return ds
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(ds.n, size=n_rows, replace=False))
    return ds.take(rows)


def _round_table(target: np.ndarray, row_sums: np.ndarray, col_sums: np.ndarray) -> np.ndarray:
    # Controlled rounding: floor everything, then place the leftover units
    # as a 0/1 matrix with the required margins (Gale-Ryser greedy).
    base = np.floor(target).astype(np.int64)
    row_need = row_sums - base.sum(axis=1)
    col_need = col_sums - base.sum(axis=0)
    frac = target - base
    for c in sorted(range(len(row_need)), key=lambda c: (-row_need[c], c)):
        for _ in range(int(row_need[c])):
            cand = [p for p in range(len(col_need)) if col_need[p] > 0 and frac[c, p] >= 0]
            if not cand:
                raise DatasetError("could not allocate stratified split")
            p = max(cand, key=lambda p: (col_need[p], frac[c, p], -p))
            base[c, p] += 1
            col_need[p] -= 1
            frac[c, p] = -1.0
    return base


def stratified_split(ds: Dataset, fractions=(0.7, 0.2, 0.1), seed: int = 0) -> SplitIndices:
    """Deterministic stratified train/validation/test partition.

    Part sizes are rounded from the fractions, with the remainder going to
    train; per-class counts in every part stay within one row of the global
    class proportions.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise DatasetError(f"fractions must be three positive numbers summing to 1, got {tuple(fractions)}")
    n = ds.n
    counts = np.bincount(ds.y, minlength=len(ds.class_names))
    for k, cnt in enumerate(counts):
        if 0 < cnt < 3:
            raise DatasetError(f"class {ds.class_names[k]!r} has {cnt} rows, fewer than the 3 parts")
    sizes = np.array([0, int(round(fr[1] * n)), int(round(fr[2] * n))])
    sizes[0] = n - sizes[1] - sizes[2]
    present = np.flatnonzero(counts)
    target = np.outer(counts[present], sizes) / n
    table = _round_table(target, counts[present], sizes)

    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for row, k in enumerate(present):
        idx = np.flatnonzero(ds.y == k)
        idx = idx[rng.permutation(len(idx))]
        a, b = table[row, 0], table[row, 0] + table[row, 1]
        parts[0].append(idx[:a])
        parts[1].append(idx[a:b])
        parts[2].append(idx[b:])
    train, val, test = (np.sort(np.concatenate(p)) for p in parts)
    return SplitIndices(train=train, validation=val, test=test, seed=seed)
