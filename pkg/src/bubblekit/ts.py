"""Monthly time-series containers, CSV ingestion, transforms and descriptive analytics.

Months are stored as integer ordinals (``year * 12 + month - 1``) so that
calendar arithmetic is plain integer arithmetic.
"""
from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._validation import DataError

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


def parse_month(text: str) -> int:
    m = _MONTH_RE.match(text.strip())
    if m is None:
        raise DataError(f"malformed date {text!r}: expected YYYY-MM")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise DataError(f"malformed date {text!r}: month out of range")
    return year * 12 + month - 1


def format_month(ordinal: int) -> str:
    year, month0 = divmod(int(ordinal), 12)
    return f"{year:04d}-{month0 + 1:02d}"


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """A named monthly series without gaps.

    Parameters
    ----------
    name : str
    start : int
        Month ordinal of the first observation (see :func:`parse_month`).
    values : array-like
    pipeline : tuple of str
        Transform steps already applied, oldest first.
    """

    name: str
    start: int
    values: np.ndarray
    pipeline: tuple = ()

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 1 or vals.size < 1:
            raise DataError(f"series {self.name!r} must be a non-empty vector")
        if not np.all(np.isfinite(vals)):
            raise DataError(f"series {self.name!r} contains missing or non-finite values")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "start", int(self.start))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def end(self) -> int:
        return self.start + len(self) - 1

    @property
    def months(self) -> list[str]:
        return [format_month(self.start + i) for i in range(len(self))]

    def month_of(self, index: int) -> str:
        return format_month(self.start + int(index))

    def slice_months(self, first: int, last: int) -> "TimeSeries":
        """Sub-series covering month ordinals ``first..last`` inclusive."""
        if first < self.start or last > self.end or last < first:
            raise DataError("requested months fall outside the series span")
        i0 = first - self.start
        return TimeSeries(self.name, first, self.values[i0:i0 + last - first + 1], self.pipeline)

    @classmethod
    def from_values(cls, values, name: str = "y", start: str | int = "2000-01") -> "TimeSeries":
        start_ord = parse_month(start) if isinstance(start, str) else int(start)
        return cls(name, start_ord, values)


@dataclass(frozen=True)
class Dataset:
    """Aligned panel of monthly series sharing a calendar."""

    start: int
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = {}
        length = None
        for name, vals in self.columns.items():
            if name in cols:
                raise DataError(f"duplicate column name {name!r}")
            arr = _frozen(vals)
            if length is None:
                length = arr.shape[0]
            elif arr.shape[0] != length:
                raise DataError("all columns must share the same length")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"column {name!r} contains missing or non-finite values")
            cols[name] = arr
        if not cols or length == 0:
            raise DataError("a dataset needs at least one non-empty column")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "start", int(self.start))

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def __len__(self) -> int:
        return next(iter(self.columns.values())).shape[0]

    @property
    def end(self) -> int:
        return self.start + len(self) - 1

    @property
    def months(self) -> list[str]:
        return [format_month(self.start + i) for i in range(len(self))]

    def __contains__(self, name) -> bool:
        return name in self.columns

    def __getitem__(self, name: str) -> TimeSeries:
        if name not in self.columns:
            raise DataError(f"column {name!r} not found; available: {', '.join(self.names)}")
        return TimeSeries(name, self.start, self.columns[name])

    def matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        names = self.names if names is None else list(names)
        for n in names:
            if n not in self.columns:
                raise DataError(f"column {n!r} not found; available: {', '.join(self.names)}")
        return np.column_stack([self.columns[n] for n in names])

    def select(self, names: Sequence[str]) -> "Dataset":
        return Dataset(self.start, {n: self[n].values for n in names})

    def slice_months(self, first: int, last: int) -> "Dataset":
        if first < self.start or last > self.end or last < first:
            raise DataError("requested months fall outside the dataset span")
        i0 = first - self.start
        n = last - first + 1
        return Dataset(first, {k: v[i0:i0 + n] for k, v in self.columns.items()})

    def head(self, n: int) -> "Dataset":
        return self.slice_months(self.start, self.start + n - 1)

    @classmethod
    def from_series(cls, series: Iterable[TimeSeries]) -> "Dataset":
        """Align series on the intersection of their spans."""
        series = list(series)
        if not series:
            raise DataError("no series given")
        first = max(s.start for s in series)
        last = min(s.end for s in series)
        if last < first:
            raise DataError("series spans do not intersect")
        cols = {}
        for s in series:
            if s.name in cols:
                raise DataError(f"duplicate column name {s.name!r}")
            cols[s.name] = s.slice_months(first, last).values
        return cls(first, cols)


def align(*datasets: Dataset) -> Dataset:
    """Merge datasets on the intersection of their monthly calendars."""
    series = [ds[name] for ds in datasets for name in ds.names]
    return Dataset.from_series(series)


def _read_one(path: str) -> Dataset:
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[0] != "date":
        raise DataError(f"{path}: first column header must be 'date', got {header[0]!r}")
    names = header[1:]
    if not names:
        raise DataError(f"{path}: no data columns")
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise DataError(f"{path}: duplicate column name {dup!r}")
    months, data = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        months.append(parse_month(row[0]))
        vals = []
        for name, cell in zip(names, row[1:]):
            cell = cell.strip()
            if cell == "":
                raise DataError(f"{path}:{lineno}: empty cell in column {name!r}")
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell {cell!r} in column {name!r}") from None
        data.append(vals)
    if not months:
        raise DataError(f"{path}: no data rows")
    expected = list(range(months[0], months[0] + len(months)))
    if months != expected:
        raise DataError(f"{path}: dates must be consecutive months without gaps")
    arr = np.array(data, dtype=float)
    return Dataset(months[0], {n: arr[:, j] for j, n in enumerate(names)})


def load_dataset(path: str | os.PathLike | Sequence, schema: Sequence[str] | None = None) -> Dataset:
    """Load one or more ``date,...`` CSV files into an aligned :class:`Dataset`.

    Several files are merged on the intersection of their months; column
    order follows the files. ``schema``, when non-empty, lists columns that
    must be present.
    """
    paths = [path] if isinstance(path, (str, os.PathLike)) else list(path)
    ds = align(*[_read_one(os.fspath(p)) for p in paths])
    if schema:
        missing = [c for c in schema if c not in ds]
        if missing:
            raise DataError(f"missing expected column(s): {', '.join(missing)}")
    return ds


def write_csv(ds: Dataset, path: str | os.PathLike, comment: str | None = None) -> None:
    """Write ``ds`` in the same layout :func:`load_dataset` reads (shortest round-trip floats)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *ds.names])
        mat = ds.matrix()
        for i, month in enumerate(ds.months):
            w.writerow([month, *(repr(float(v)) for v in mat[i])])


# --------------------------------------------------------------------------
# transforms

_STEP_NAMES = {"log", "diff", "logret", "standardize", "lag"}


@dataclass(frozen=True)
class TransformSpec:
    """Ordered transform steps, e.g. ``(("log", 0), ("diff", 1))``."""

    steps: tuple = ()

    def __post_init__(self):
        steps = []
        for step in self.steps:
            name, order = (step, 0) if isinstance(step, str) else (step[0], int(step[1]))
            if name not in _STEP_NAMES:
                raise DataError(f"unknown transform step {name!r}")
            if name in ("diff", "lag"):
                order = order or 1
                if order < 1:
                    raise DataError(f"{name} order must be >= 1")
            steps.append((name, order))
        object.__setattr__(self, "steps", tuple(steps))

    @classmethod
    def parse(cls, text: str) -> "TransformSpec":
        """Parse ``"log,diff,diff"``, ``"diff:12"``, ``"lag:1,standardize"`` or ``"log-diff"``."""
        text = (text or "").strip()
        if text in ("", "none", "identity"):
            return cls(())
        if text == "log-diff":
            return cls((("log", 0), ("diff", 1)))
        steps = []
        for part in text.split(","):
            part = part.strip()
            name, _, order = part.partition(":")
            steps.append((name, int(order) if order else 0))
        return cls(tuple(steps))

    @property
    def shrinkage(self) -> int:
        return sum(k for name, k in self.steps if name in ("diff", "lag")) + sum(
            1 for name, _ in self.steps if name == "logret")

    def describe(self) -> str:
        return ",".join(name if name in ("log", "logret", "standardize") else f"{name}:{k}"
                        for name, k in self.steps) or "none"


def standardize(s: TimeSeries) -> TimeSeries:
    """Zero mean, unit sample variance (denominator n - 1)."""
    x = s.values
    if x.shape[0] < 2:
        raise DataError(f"standardize needs at least 2 observations ({s.name})")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DataError(f"zero variance: cannot standardize {s.name!r}")
    mean = x.mean()
    z = (x - mean) / sd
    # second pass removes the O(eps * n) residual mean left by the first division
    z = z - z.mean()
    z = z / z.std(ddof=1)
    return TimeSeries(s.name, s.start, z, s.pipeline + ("standardize",))


def apply_transform(s: TimeSeries, spec: TransformSpec) -> TimeSeries:
    """Apply ``spec`` step by step; each difference or lag of order k drops k months."""
    cur = s
    for name, k in spec.steps:
        x = cur.values
        if name == "log":
            if np.any(x <= 0):
                raise DataError(f"nonpositive value under log in {cur.name!r}")
            cur = TimeSeries(cur.name, cur.start, np.log(x), cur.pipeline + ("log",))
        elif name == "logret":
            if np.any(x <= 0):
                raise DataError(f"nonpositive value under log in {cur.name!r}")
            if x.shape[0] < 2:
                raise DataError(f"order 1 >= length {x.shape[0]} for {cur.name!r}")
            cur = TimeSeries(cur.name, cur.start + 1, np.diff(np.log(x)), cur.pipeline + ("logret",))
        elif name == "diff":
            if k >= x.shape[0]:
                raise DataError(f"difference order {k} >= length {x.shape[0]} for {cur.name!r}")
            cur = TimeSeries(cur.name, cur.start + k, x[k:] - x[:-k], cur.pipeline + (f"diff:{k}",))
        elif name == "lag":
            if k >= x.shape[0]:
                raise DataError(f"lag order {k} >= length {x.shape[0]} for {cur.name!r}")
            cur = TimeSeries(cur.name, cur.start + k, x[:-k], cur.pipeline + (f"lag:{k}",))
        elif name == "standardize":
            cur = standardize(cur)
    return cur


def transform_dataset(ds: Dataset, specs: dict | TransformSpec) -> Dataset:
    """Transform every column (or those keyed in ``specs``) and re-align."""
    out = []
    for name in ds.names:
        spec = specs if isinstance(specs, TransformSpec) else specs.get(name, TransformSpec())
        out.append(apply_transform(ds[name], spec))
    return Dataset.from_series(out)


# --------------------------------------------------------------------------
# descriptive analytics

def correlation_matrix(ds: Dataset) -> np.ndarray:
    """Pearson correlation matrix of the dataset's columns (column order)."""
    X = ds.matrix()
    if X.shape[0] < 2:
        raise DataError("correlation needs at least 2 observations per column")
    sd = X.std(axis=0, ddof=1)
    if np.any(sd == 0):
        bad = ds.names[int(np.argmin(sd))]
        raise DataError(f"constant column {bad!r}: correlation undefined")
    Z = (X - X.mean(axis=0)) / sd
    R = Z.T @ Z / (X.shape[0] - 1)
    R = (R + R.T) / 2
    np.fill_diagonal(R, 1.0)
    return np.clip(R, -1.0, 1.0)


def correlation_rows(ds: Dataset) -> list[tuple]:
    """Long-format ``(row, column, rho)`` records of :func:`correlation_matrix`."""
    R = correlation_matrix(ds)
    names = ds.names
    return [(a, b, float(R[i, j])) for i, a in enumerate(names) for j, b in enumerate(names)]


@dataclass(frozen=True)
class PhaseLabeling:
    """Split of a monthly span into labelled segments.

    ``boundaries`` holds the first month (ordinal) of every segment but the first.
    """

    boundaries: tuple
    labels: tuple

    def __post_init__(self):
        b = tuple(int(v) for v in self.boundaries)
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
            raise DataError("phase boundaries must be strictly increasing")
        if len(self.labels) != len(b) + 1:
            raise DataError("need exactly one label per segment (boundaries + 1)")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "labels", tuple(self.labels))

    def segments(self, start: int, end: int) -> list[tuple[str, int, int]]:
        """``(label, first_month, last_month)`` for each segment of ``[start, end]``."""
        if self.boundaries and (self.boundaries[0] <= start or self.boundaries[-1] > end):
            raise DataError("phase boundaries must lie inside the series span")
        edges = [start, *self.boundaries, end + 1]
        return [(lab, edges[i], edges[i + 1] - 1) for i, lab in enumerate(self.labels)]


def silverman_bandwidth(x: np.ndarray) -> float:
    n = x.shape[0]
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * n ** (-0.2)


def gaussian_kde(x: np.ndarray, grid: np.ndarray, bandwidth: float | None = None) -> np.ndarray:
    h = silverman_bandwidth(x) if bandwidth is None else bandwidth
    if not h > 0:
        raise DataError("zero spread: kernel bandwidth undefined")
    u = (grid[:, None] - x[None, :]) / h
    return np.exp(-0.5 * u * u).sum(axis=1) / (x.shape[0] * h * math.sqrt(2 * math.pi))


def phase_density_export(ds: Dataset, labeling: PhaseLabeling, grid_size: int = 256) -> list[tuple]:
    """Per-variable, per-phase Gaussian KDE on a shared uniform grid.

    Returns long-format rows ``(variable, phase, x, density)``. The grid for a
    variable spans every phase's sample plus four bandwidths on each side.
    """
    if grid_size < 2:
        raise DataError("grid_size must be >= 2")
    segs = labeling.segments(ds.start, ds.end)
    rows = []
    for name in ds.names:
        x = ds.columns[name]
        parts = []
        for label, first, last in segs:
            seg = x[first - ds.start:last - ds.start + 1]
            if seg.shape[0] < 2:
                raise DataError(f"segment {label!r} has fewer than 2 observations")
            parts.append((label, seg, silverman_bandwidth(seg)))
        lo = min(seg.min() - 4 * h for _, seg, h in parts)
        hi = max(seg.max() + 4 * h for _, seg, h in parts)
        grid = np.linspace(lo, hi, grid_size)
        for label, seg, h in parts:
            dens = gaussian_kde(seg, grid, h)
            rows.extend((name, label, float(g), float(d)) for g, d in zip(grid, dens))
    return rows
