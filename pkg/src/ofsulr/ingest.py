"""CSV loading, column profiling and the cleaning recipes for lifelog tables.

A :class:`Table` is an immutable, typed, column-oriented container.  Missing
cells are stored as ``None``.  Every operation here returns a new table.
"""

from __future__ import annotations

import csv
import datetime as _dt
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError

DEFAULT_SENTINELS = ("", "na", "nan")

# text columns with more distinct values than this (and mostly unique) are free text
_CATEGORICAL_MAX_UNIQUE = 50


class ColumnKind(str, Enum):
    INTEGER = "integer"
    REAL = "real"
    TEXT = "text"
    CATEGORICAL = "categorical"
    MIXED = "mixed"
    TIMESTAMP = "timestamp"

    @property
    def numeric(self) -> bool:
        return self in (ColumnKind.INTEGER, ColumnKind.REAL, ColumnKind.TIMESTAMP)


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind
    cells: tuple

    @property
    def null_count(self) -> int:
        return sum(1 for c in self.cells if c is None)


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]
    row_count: int

    def __post_init__(self):
        seen = set()
        for col in self.columns:
            if col.name in seen:
                raise DataError(f"duplicate column name {col.name!r}")
            seen.add(col.name)
            if len(col.cells) != self.row_count:
                raise DataError(
                    f"column {col.name!r} has {len(col.cells)} cells, expected {self.row_count}"
                )

    @classmethod
    def from_columns(cls, name: str, columns: Iterable[Column], row_count: int | None = None) -> "Table":
        columns = tuple(columns)
        if row_count is None:
            row_count = len(columns[0].cells) if columns else 0
        return cls(name, columns, row_count)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise DataError(f"unknown column {name!r} in table {self.name!r}")

    def rows(self, indices: Sequence[int]) -> "Table":
        """Sub-table with the given rows, in the given order."""
        cols = tuple(Column(c.name, c.kind, tuple(c.cells[i] for i in indices)) for c in self.columns)
        return Table(self.name, cols, len(indices))

    def slice(self, start: int, stop: int) -> "Table":
        cols = tuple(Column(c.name, c.kind, c.cells[start:stop]) for c in self.columns)
        return Table(self.name, cols, len(range(start, min(stop, self.row_count))))

    def with_column(self, column: Column, position: int | None = None) -> "Table":
        cols = [c for c in self.columns if c.name != column.name]
        if position is None:
            cols.append(column)
        else:
            cols.insert(position, column)
        return Table(self.name, tuple(cols), self.row_count)

    def iter_rows(self):
        for i in range(self.row_count):
            yield tuple(c.cells[i] for c in self.columns)


@dataclass(frozen=True)
class ColumnProfile:
    name: str
    null_count: int
    not_null_count: int
    kind: ColumnKind
    valid_pct: float


# ---------------------------------------------------------------- parsing


def _parse_scalar(raw: str):
    """Parse a CSV token to int, float or str (in that order of preference)."""
    s = raw.strip()
    if "_" in s:
        return raw
    try:
        return int(s)
    except ValueError:
        pass
    try:
        v = float(s)
    except ValueError:
        return raw
    # "inf"/"nan"-like words are text, not numbers
    if s.lower().lstrip("+-") in ("inf", "infinity", "nan"):
        return raw
    return v


def _coerce(value, kind: ColumnKind):
    """Coerce an already-parsed cell to ``kind``; unparseable cells become missing."""
    if value is None:
        return None
    if kind in (ColumnKind.INTEGER, ColumnKind.TIMESTAMP):
        if isinstance(value, bool):
            return int(value)
        if isinstance(value, int):
            return value
        if isinstance(value, float):
            return int(value) if value.is_integer() else None
        parsed = _parse_scalar(value)
        if isinstance(parsed, int):
            return parsed
        if isinstance(parsed, float) and parsed.is_integer():
            return int(parsed)
        return None
    if kind is ColumnKind.REAL:
        if isinstance(value, (int, float)):
            return float(value)
        parsed = _parse_scalar(value)
        return float(parsed) if isinstance(parsed, (int, float)) else None
    if kind in (ColumnKind.TEXT, ColumnKind.CATEGORICAL):
        return value if isinstance(value, str) else _format_cell(value)
    return value  # mixed keeps the parsed representation


def infer_kind(values: Sequence) -> ColumnKind:
    """Infer a column kind from parsed, non-missing values."""
    present = [v for v in values if v is not None]
    kinds = set()
    for v in present:
        if isinstance(v, int):
            kinds.add("integer")
        elif isinstance(v, float):
            kinds.add("real")
        else:
            kinds.add("text")
    if not kinds or kinds == {"text"}:
        n_unique = len(set(present))
        if n_unique > _CATEGORICAL_MAX_UNIQUE and n_unique > 0.5 * len(present):
            return ColumnKind.TEXT
        return ColumnKind.CATEGORICAL
    if kinds == {"integer"}:
        return ColumnKind.INTEGER
    if kinds <= {"integer", "real"}:
        return ColumnKind.REAL
    return ColumnKind.MIXED


def load_csv(
    path: str | Path,
    kind_hints: Mapping[str, ColumnKind | str] | None = None,
    sentinels: Iterable[str] = DEFAULT_SENTINELS,
    name: str | None = None,
) -> Table:
    """Read an RFC-4180 CSV file with a header row into a :class:`Table`.

    Cells equal (case-insensitively, after stripping) to one of ``sentinels``
    are missing.  Columns named in ``kind_hints`` are coerced to that kind, with
    unparseable cells becoming missing; other kinds are inferred.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty; a header row is required") from None
        raw_rows = []
        for idx, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {idx} has {len(row)} fields, header has {len(header)}"
                )
            raw_rows.append(row)
    return _build_table(name or path.stem, header, raw_rows, kind_hints, sentinels)


def table_from_records(
    name: str,
    header: Sequence[str],
    rows: Sequence[Sequence[str]],
    kind_hints: Mapping[str, ColumnKind | str] | None = None,
    sentinels: Iterable[str] = DEFAULT_SENTINELS,
) -> Table:
    """Build a table from raw string records, applying the same rules as :func:`load_csv`."""
    for idx, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {idx} has {len(row)} fields, header has {len(header)}")
    return _build_table(name, list(header), rows, kind_hints, sentinels)


def _build_table(name, header, raw_rows, kind_hints, sentinels) -> Table:
    missing = {s.strip().lower() for s in sentinels}
    hints = {k: ColumnKind(v) for k, v in (kind_hints or {}).items()}
    unknown = set(hints) - set(header)
    if unknown:
        raise DataError(f"kind hints name unknown columns: {sorted(unknown)}")
    columns = []
    for j, col_name in enumerate(header):
        parsed = []
        for row in raw_rows:
            raw = row[j]
            parsed.append(None if raw.strip().lower() in missing else _parse_scalar(raw))
        kind = hints.get(col_name) or infer_kind(parsed)
        columns.append(Column(col_name, kind, tuple(_coerce(v, kind) for v in parsed)))
    return Table(name, tuple(columns), len(raw_rows))


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_csv(table: Table, path: str | Path) -> None:
    """Write ``table`` as CSV with a header row; missing cells are empty fields."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.column_names)
        for row in table.iter_rows():
            writer.writerow([_format_cell(v) for v in row])


def load_uci_diabetes_dir(directory: str | Path) -> Table:
    """Concatenate the UCI Diabetes ``data-NN`` files (tab separated, no header).

    The result has string columns Date, Time, Code, Value, ready for the
    ``uci-diabetes`` recipe.
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if re.fullmatch(r"data-\d+", p.name))
    if not files:
        raise DataError(f"no data-NN files found in {directory}")
    rows = []
    for p in files:
        with open(p, encoding="utf-8", errors="replace") as fh:
            for line in fh:
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                parts += [""] * (4 - len(parts))
                rows.append(parts[:4])
    header = ["Date", "Time", "Code", "Value"]
    hints = {"Date": ColumnKind.TEXT, "Time": ColumnKind.TEXT}
    return _build_table("uci-diabetes", header, rows, hints, DEFAULT_SENTINELS)


# ---------------------------------------------------------------- profiling and cleaning


def profile(table: Table) -> list[ColumnProfile]:
    """Null / not-null counts and percentage of valid cells per column.

    For an empty table the valid percentage is undefined; it is reported as
    100 by convention.
    """
    out = []
    n = table.row_count
    for col in table.columns:
        nulls = col.null_count
        valid = 100.0 if n == 0 else 100.0 * (n - nulls) / n
        out.append(ColumnProfile(col.name, nulls, n - nulls, col.kind, valid))
    return out


def drop_columns(table: Table, names: Iterable[str]) -> Table:
    names = list(names)
    present = set(table.column_names)
    unknown = [n for n in names if n not in present]
    if unknown:
        raise DataError(f"cannot drop unknown columns {unknown}")
    drop = set(names)
    return Table(table.name, tuple(c for c in table.columns if c.name not in drop), table.row_count)


def select_columns(table: Table, names: Iterable[str]) -> Table:
    return Table(table.name, tuple(table.column(n) for n in names), table.row_count)


def drop_sparse_columns(table: Table, min_valid_pct: float = 50.0) -> Table:
    """Drop columns whose share of valid cells is below ``min_valid_pct``."""
    sparse = [p.name for p in profile(table) if p.valid_pct < min_valid_pct]
    return drop_columns(table, sparse)


def drop_null_rows(table: Table, subset: Iterable[str] | None = None) -> Table:
    cols = table.columns if subset is None else [table.column(n) for n in subset]
    keep = [i for i in range(table.row_count) if all(c.cells[i] is not None for c in cols)]
    if len(keep) == table.row_count:
        return table
    return table.rows(keep)


def coerce_column(table: Table, name: str, kind: ColumnKind | str) -> Table:
    """Re-type a column; cells that do not parse as ``kind`` become missing."""
    kind = ColumnKind(kind)
    col = table.column(name)
    pos = table.column_names.index(name)
    return table.with_column(Column(name, kind, tuple(_coerce(v, kind) for v in col.cells)), pos)


_PAIR_RE = re.compile(r"^\s*\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)\s*$")
_POINT_RE = re.compile(r"^\s*POINT\s*\(\s*([-+0-9.eE]+)\s+([-+0-9.eE]+)\s*\)\s*$", re.IGNORECASE)


def parse_geolocation(cell) -> tuple[float, float] | None:
    """``"(lat, lon)"`` or WKT ``"POINT (lon lat)"`` to ``(lat, lon)``; None when unparseable."""
    if not isinstance(cell, str):
        return None
    try:
        m = _PAIR_RE.match(cell)
        if m:
            return float(m.group(1)), float(m.group(2))
        m = _POINT_RE.match(cell)
        if m:
            return float(m.group(2)), float(m.group(1))
    except ValueError:
        return None
    return None


def decompose_geolocation(table: Table, col: str) -> Table:
    """Replace a geolocation text column by real columns ``Geo_lat`` and ``Geo_lon``."""
    source = table.column(col)
    pos = table.column_names.index(col)
    parsed = [parse_geolocation(c) for c in source.cells]
    lat = Column("Geo_lat", ColumnKind.REAL, tuple(p[0] if p else None for p in parsed))
    lon = Column("Geo_lon", ColumnKind.REAL, tuple(p[1] if p else None for p in parsed))
    cols = list(table.columns)
    cols[pos:pos + 1] = [lat, lon]
    return Table(table.name, tuple(cols), table.row_count)


_DATE_RE = re.compile(r"^\s*(\d{1,2})-(\d{1,2})-(\d{4})\s*$")
_TIME_RE = re.compile(r"^\s*(\d{1,2}):(\d{2})\s*$")
_EPOCH = _dt.datetime(1970, 1, 1, tzinfo=_dt.timezone.utc)


def posix_time(date_cell, time_cell) -> int | None:
    """Seconds since the Unix epoch (UTC) for MM-DD-YYYY and HH:MM strings."""
    if not isinstance(date_cell, str) or not isinstance(time_cell, str):
        return None
    dm, tm = _DATE_RE.match(date_cell), _TIME_RE.match(time_cell)
    if not dm or not tm:
        return None
    month, day, year = (int(g) for g in dm.groups())
    hour, minute = (int(g) for g in tm.groups())
    try:
        stamp = _dt.datetime(year, month, day, hour, minute, tzinfo=_dt.timezone.utc)
    except ValueError:
        return None
    return int((stamp - _EPOCH).total_seconds())


def combine_datetime(table: Table, date_col: str, time_col: str, out: str = "timestamp") -> Table:
    """Fuse a date and a time column into one integer POSIX ``timestamp`` column."""
    dates, times = table.column(date_col), table.column(time_col)
    stamps = tuple(posix_time(d, t) for d, t in zip(dates.cells, times.cells))
    pos = table.column_names.index(date_col)
    cols = [c for c in table.columns if c.name not in (date_col, time_col)]
    pos = min(pos, len(cols))
    cols.insert(pos, Column(out, ColumnKind.TIMESTAMP, stamps))
    return Table(table.name, tuple(cols), table.row_count)


# ---------------------------------------------------------------- recipes


def _norm(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", name.lower())


def resolve_column(table: Table, wanted: str) -> str:
    """Find a column by name ignoring case, spaces and punctuation."""
    if wanted in table:
        return wanted
    key = _norm(wanted)
    hits = [c for c in table.column_names if _norm(c) == key]
    if len(hits) != 1:
        raise DataError(f"column {wanted!r} not found (or ambiguous) in table {table.name!r}")
    return hits[0]


US_CDI_KEEP = (
    "Year Start", "Year End", "Location Id", "Data Source", "Topic ID", "Data Value Unit",
    "Data Value Type ID", "Data Value", "Low Confidence Limit", "High Confidence Limit",
    "Geo Location", "Question ID", "Stratification ID1", "Stratification Category ID1",
)
US_CDI_NUMERIC = ("Data Value", "Low Confidence Limit", "High Confidence Limit")
US_CDI_CLUSTER_FEATURES = ("Data Value", "Low Confidence Limit", "High Confidence Limit", "Geo_lat", "Geo_lon")


@dataclass
class RecipeResult:
    table: Table
    cluster_features: list[str] | None
    log: list[str] = field(default_factory=list)


def recipe_us_cdi(table: Table) -> RecipeResult:
    """Keep the 14 retained US-CDI attributes, drop incomplete rows, split GeoLocation."""
    log = [f"input: {table.row_count} rows x {len(table.columns)} columns"]
    keep = [resolve_column(table, c) for c in US_CDI_KEEP]
    t = select_columns(table, keep)
    for c in US_CDI_NUMERIC:
        t = coerce_column(t, resolve_column(t, c), ColumnKind.REAL)
    t = drop_null_rows(t)
    log.append(f"after column selection and null-row removal: {t.row_count} rows")
    t = decompose_geolocation(t, resolve_column(t, "Geo Location"))
    t = drop_null_rows(t)
    log.append(f"after geolocation split: {t.row_count} rows x {len(t.columns)} columns")
    feats = [resolve_column(t, c) for c in US_CDI_CLUSTER_FEATURES]
    return RecipeResult(t, feats, log)


def recipe_uci_diabetes(table: Table) -> RecipeResult:
    """Treat non-numeric Code/Value cells as invalid, fuse Date+Time, drop invalid rows."""
    log = [f"input: {table.row_count} rows"]
    date, time = resolve_column(table, "Date"), resolve_column(table, "Time")
    t = table
    for c in ("Code", "Value"):
        name = resolve_column(t, c)
        t = coerce_column(t, name, ColumnKind.INTEGER if c == "Code" else ColumnKind.REAL)
    for p in profile(t):
        log.append(f"{p.name}: {p.null_count} missing/invalid")
    # date/time text must stay text for the fusion step
    t = coerce_column(t, date, ColumnKind.TEXT)
    t = coerce_column(t, time, ColumnKind.TEXT)
    t = combine_datetime(t, date, time)
    t = drop_null_rows(t)
    log.append(f"valid rows: {t.row_count}")
    return RecipeResult(t, None, log)


def recipe_none(table: Table) -> RecipeResult:
    return RecipeResult(drop_null_rows(table), None, [f"rows: {table.row_count}"])


RECIPES = {
    "none": recipe_none,
    "us-cdi": recipe_us_cdi,
    "uci-diabetes": recipe_uci_diabetes,
}


def apply_recipe(table: Table, name: str) -> RecipeResult:
    try:
        fn = RECIPES[name]
    except KeyError:
        raise DataError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}") from None
    return fn(table)
