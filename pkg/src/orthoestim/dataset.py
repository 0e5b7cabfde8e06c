"""Observation tables: schema-checked CSV ingestion, preprocessing, fold assignment.

Columns are typed (binary / continuous / ordinal) and carry a modelling role.
All transforms are pure functions of their inputs; nothing here keeps state.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadFoldCount,
    BinaryDomain,
    DegenerateGroupWarning,
    DimMismatch,
    EmptyData,
    IncompleteRow,
    MissingColumn,
    NegativeDuration,
    NonNumericCell,
    OrdinalDomain,
    TooManyClasses,
)

KINDS = ("binary", "continuous", "ordinal")
ROLES = ("outcome", "policy", "covariate", "identifier")


@dataclass(frozen=True)
class Column:
    """One schema column: a name, a value kind, and a modelling role."""

    name: str
    kind: str
    role: str = "covariate"
    categories: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.role not in ROLES:
            raise ValueError(f"unknown column role {self.role!r}")
        if self.kind == "ordinal":
            if self.categories is None or len(self.categories) < 2:
                raise ValueError(f"ordinal column {self.name!r} needs >= 2 ordered categories")
            cats = tuple(float(c) for c in self.categories)
            if any(b <= a for a, b in zip(cats, cats[1:])):
                raise ValueError(f"categories of {self.name!r} must be strictly increasing")
            object.__setattr__(self, "categories", cats)
        elif self.categories is not None:
            raise ValueError(f"only ordinal columns carry categories ({self.name!r})")


@dataclass(frozen=True)
class VariableSchema:
    """Ordered column list with exactly one outcome and one policy column."""

    columns: tuple[Column, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names in schema")
        n_outcome = sum(c.role == "outcome" for c in self.columns)
        n_policy = sum(c.role == "policy" for c in self.columns)
        if n_outcome != 1:
            raise ValueError(f"schema must have exactly one outcome column (got {n_outcome})")
        if n_policy != 1:
            raise ValueError(f"schema must have exactly one policy column (got {n_policy})")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise MissingColumn(name) from None

    def column(self, name: str) -> Column:
        return self.columns[self.index(name)]

    @property
    def outcome(self) -> Column:
        return next(c for c in self.columns if c.role == "outcome")

    @property
    def policy(self) -> Column:
        return next(c for c in self.columns if c.role == "policy")

    def covariate_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.role == "covariate")


def _check_domains(schema: VariableSchema, rows: np.ndarray) -> None:
    """Raise on the first row violating a column's kind. Rows are 1-based."""
    for j, col in enumerate(schema.columns):
        vals = rows[:, j]
        bad = ~np.isfinite(vals)
        if bad.any():
            raise NonNumericCell(int(np.argmax(bad)) + 1, col.name)
        if col.kind == "binary":
            bad = (vals != 0.0) & (vals != 1.0)
            if bad.any():
                raise BinaryDomain(int(np.argmax(bad)) + 1, col.name)
        elif col.kind == "ordinal":
            bad = ~np.isin(vals, np.asarray(col.categories))
            if bad.any():
                raise OrdinalDomain(int(np.argmax(bad)) + 1, col.name)


@dataclass(frozen=True)
class Dataset:
    """An n x p numeric observation matrix conforming to a schema.

    In-memory datasets may be empty (n == 0); CSV ingestion requires n >= 1.
    """

    schema: VariableSchema
    rows: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        if rows.ndim != 2 or rows.shape[1] != len(self.schema.columns):
            raise DimMismatch(
                f"rows shape {rows.shape} does not match schema with "
                f"{len(self.schema.columns)} columns"
            )
        _check_domains(self.schema, rows)
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.schema.index(name)]

    def matrix(self, names) -> np.ndarray:
        idx = [self.schema.index(name) for name in names]
        return self.rows[:, idx]

    def with_column(self, column: Column, values: np.ndarray) -> "Dataset":
        """New dataset with `column` appended, or replaced if the name exists."""
        values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        if values.shape[0] != self.n:
            raise DimMismatch("appended column length differs from n")
        if column.name in self.schema.names:
            j = self.schema.index(column.name)
            cols = list(self.schema.columns)
            cols[j] = column
            rows = self.rows.copy()
            rows[:, j] = values[:, 0]
        else:
            cols = list(self.schema.columns) + [column]
            rows = np.hstack([self.rows, values])
        return Dataset(VariableSchema(tuple(cols)), rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.schema.names)
            for row in self.rows:
                writer.writerow([repr(float(v)) for v in row])


def load_csv(path, schema: VariableSchema) -> Dataset:
    """Parse a comma-delimited UTF-8 file into a Dataset.

    The header must contain every schema column (extra columns are ignored,
    which keeps re-ingestion of preprocessed outputs possible). Row numbers
    in errors are 1-based data rows, excluding the header.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyData(f"{path}: file is empty") from None
        pos = []
        for col in schema.columns:
            if col.name not in header:
                raise MissingColumn(col.name)
            pos.append(header.index(col.name))
        data = []
        for irow, cells in enumerate(reader, start=1):
            if not cells:
                continue
            row = np.empty(len(pos))
            for j, (col, k) in enumerate(zip(schema.columns, pos)):
                if k >= len(cells):
                    raise IncompleteRow(irow)
                text = cells[k].strip()
                try:
                    val = float(text)
                except ValueError:
                    raise NonNumericCell(irow, col.name) from None
                if not np.isfinite(val):
                    raise NonNumericCell(irow, col.name)
                row[j] = val
            data.append(row)
    if not data:
        raise EmptyData(f"{path}: no data rows")
    return Dataset(schema, np.asarray(data))


def read_numeric_csv(path) -> tuple[list[str], np.ndarray]:
    """Schema-free ingestion: header names plus an all-float matrix."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyData(f"{path}: file is empty") from None
        data = []
        for irow, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) < len(header):
                raise IncompleteRow(irow)
            row = np.empty(len(header))
            for j, name in enumerate(header):
                try:
                    val = float(cells[j].strip())
                except ValueError:
                    raise NonNumericCell(irow, name) from None
                if not np.isfinite(val):
                    raise NonNumericCell(irow, name)
                row[j] = val
            data.append(row)
    if not data:
        raise EmptyData(f"{path}: no data rows")
    return header, np.asarray(data)


def write_numeric_csv(path, header, matrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])


def min_max_normalize(values, group_ids=None) -> np.ndarray:
    """Rescale to [0, 1] within each group: (x - min) / (max - min).

    A group whose max equals its min maps to 0.0 for every member; such
    groups are reported through a DegenerateGroupWarning rather than an
    error so batch pipelines keep running.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise DimMismatch("values must be one-dimensional")
    if group_ids is None:
        gids = np.zeros(x.size, dtype=np.int64)
    else:
        gids = np.asarray(group_ids)
        if gids.shape != x.shape:
            raise DimMismatch("group_ids length differs from values")
    out = np.empty_like(x)
    degenerate = []
    for g in np.unique(gids):
        m = gids == g
        lo = x[m].min()
        hi = x[m].max()
        if hi == lo:
            out[m] = 0.0
            degenerate.append(g)
        else:
            out[m] = (x[m] - lo) / (hi - lo)
    if degenerate:
        warnings.warn(
            f"constant group(s) {degenerate} normalized to 0.0",
            DegenerateGroupWarning,
            stacklevel=2,
        )
    return out


def _segment_cost(s: np.ndarray, ss: np.ndarray, i: int, p: np.ndarray) -> np.ndarray:
    """Within-class sum of squared deviations for segments x[i:p] (prefix sums)."""
    m = p - i
    return ss[p] - ss[i] - (s[p] - s[i]) ** 2 / m


def jenks_breaks(values, classes: int) -> np.ndarray:
    """Optimal 1-D classification into `classes` groups by total within-class SSE.

    Exact dynamic program (no heuristic): cost O(classes * n^2). Returns the
    classes-1 break values, each the inclusive upper bound of its class on the
    sorted data. Ties between equally good partitions resolve to the leftmost
    break positions in lexicographic order.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    c = int(classes)
    if c < 2:
        raise ValueError("classes must be >= 2")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    distinct = np.unique(x).size
    if c > distinct:
        raise TooManyClasses(c, distinct)

    s = np.concatenate([[0.0], np.cumsum(x)])
    ss = np.concatenate([[0.0], np.cumsum(x * x)])

    # G[k, i] = optimal SSE of splitting the suffix x[i:] into k classes.
    G = np.full((c + 1, n + 1), np.inf)
    for i in range(n):
        G[1, i] = _segment_cost(s, ss, i, np.array([n]))[0]
    for k in range(2, c + 1):
        for i in range(n - k, -1, -1):
            p = np.arange(i + 1, n - k + 2)
            G[k, i] = np.min(_segment_cost(s, ss, i, p) + G[k - 1, p])

    # Walk left to right, taking the smallest split that attains the optimum.
    positions = []
    i = 0
    for k in range(c, 1, -1):
        p = np.arange(i + 1, n - k + 2)
        total = _segment_cost(s, ss, i, p) + G[k - 1, p]
        i = int(p[np.argmin(total)])
        positions.append(i)
    return x[np.asarray(positions) - 1]


def assign_classes(values, breaks) -> np.ndarray:
    """Class codes 0..len(breaks) with each break an inclusive upper bound."""
    return np.searchsorted(np.asarray(breaks), np.asarray(values), side="left").astype(np.int64)


def discretize_wait(seconds) -> np.ndarray:
    """Wait-time codes: 1 below 5 s, 2 from 5 s through 20 s, 3 above 20 s."""
    t = np.asarray(seconds, dtype=np.float64)
    if np.any(t < 0):
        raise NegativeDuration(f"negative duration at position {int(np.argmax(t < 0))}")
    return np.where(t < 5.0, 1, np.where(t <= 20.0, 2, 3)).astype(np.int64)


@dataclass(frozen=True)
class FoldAssignment:
    """Deterministic K-fold labels over observation indices [0, n)."""

    k: int
    labels: np.ndarray = field(repr=False)

    def indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.labels == fold)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row_index", "fold"])
            for i, lab in enumerate(self.labels):
                writer.writerow([i, int(lab)])


def kfold_split(n: int, k: int, seed: int) -> FoldAssignment:
    """Shuffle [0, n) with `seed` and cut into k folds whose sizes differ by <= 1."""
    if k < 2 or k > n:
        raise BadFoldCount(k, n)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    labels = np.empty(n, dtype=np.int64)
    start = 0
    for fold, size in enumerate(sizes):
        labels[perm[start : start + size]] = fold
        start += size
    return FoldAssignment(k=k, labels=labels)
