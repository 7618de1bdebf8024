"""Table loading, row sampling, and per-column profiling.

Tables are plain immutable-by-convention containers: a name plus ordered
columns of typed cells (None marks a missing value, which is distinct from
empty text).  Column type inference follows fixed rules rather than pandas
defaults so that the profile lines rendered into prompts are reproducible:

* integer if every non-null cell parses as an integer; the dtype label is
  uint8/uint16/uint32/int64 chosen by value range,
* real (float64) if every non-null cell parses numerically,
* bool if every non-null cell is a boolean literal,
* otherwise categorical when the distinct count is at most
  max(20, 5% of rows), else free text (object).

Dtype metadata carried by the source file (parquet) overrides inference.
"""

from __future__ import annotations

import csv
import datetime as dt
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

Cell = Union[None, bool, int, float, str, dt.date, dt.datetime]

MAX_EXAMPLE_VALUES = 5
CATEGORY_DISTINCT_CAP = 20
CATEGORY_DISTINCT_FRACTION = 0.05


class ParseError(ValueError):
    """The source file could not be parsed as a table."""


class EmptyTable(ValueError):
    """The source file has no columns."""


_INT_RE = re.compile(r"[+-]?\d+")
_FLOAT_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_BOOL_LITERALS = {"true": True, "false": False}


@dataclass
class Column:
    """One table column: verbatim name, typed cells, optional source dtype."""

    name: str
    cells: list
    dtype_override: Optional[str] = None

    def __len__(self) -> int:
        return len(self.cells)


@dataclass
class Table:
    """A named table; every column holds exactly ``row_count`` cells."""

    name: str
    columns: list[Column]

    def __post_init__(self) -> None:
        if self.columns:
            lengths = {len(c) for c in self.columns}
            if len(lengths) > 1:
                raise ValueError(f"ragged columns in table {self.name!r}: {lengths}")

    @property
    def row_count(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def column_count(self) -> int:
        return len(self.columns)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def profiles(self) -> list["ColumnProfile"]:
        return [profile_column(c, i, self.row_count) for i, c in enumerate(self.columns)]

    def rows(self, limit: Optional[int] = None) -> list[list]:
        n = self.row_count if limit is None else min(limit, self.row_count)
        return [[c.cells[i] for c in self.columns] for i in range(n)]


@dataclass
class ColumnProfile:
    """Summary of one column as rendered into the prompt's column description."""

    index: int
    name: str
    non_null_count: int
    dtype_label: str
    element_type_labels: list[str]
    values_note: str


def _classify_cells(cells: Sequence) -> str:
    """Kind of the typed cells: bool, int, float, date, datetime, or text."""
    kinds = set()
    for v in cells:
        if v is None:
            continue
        if isinstance(v, bool):
            kinds.add("bool")
        elif isinstance(v, int):
            kinds.add("int")
        elif isinstance(v, float):
            kinds.add("float")
        elif isinstance(v, dt.datetime):
            kinds.add("datetime")
        elif isinstance(v, dt.date):
            kinds.add("date")
        else:
            kinds.add("text")
    if not kinds:
        return "text"
    if kinds == {"bool"}:
        return "bool"
    if kinds == {"int"}:
        return "int"
    if kinds <= {"int", "float"}:
        return "float"
    if kinds == {"datetime"}:
        return "datetime"
    if kinds <= {"date", "datetime"}:
        return "date"
    return "text"


def _int_dtype_label(values: Sequence[int]) -> str:
    lo = min(values)
    hi = max(values)
    if lo >= 0:
        if hi <= 0xFF:
            return "uint8"
        if hi <= 0xFFFF:
            return "uint16"
        if hi <= 0xFFFFFFFF:
            return "uint32"
    return "int64"


def _element_type_label(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, bool):
        return "<class 'bool'>"
    if isinstance(value, int):
        return "<class 'int'>"
    if isinstance(value, float):
        return "<class 'float'>"
    if isinstance(value, dt.datetime):
        return "<class 'datetime.datetime'>"
    if isinstance(value, dt.date):
        return "<class 'datetime.date'>"
    return "<class 'str'>"


def profile_column(column: Column, index: int, row_count: int) -> ColumnProfile:
    """Profile one column; counts always reflect the cells actually present."""
    cells = column.cells
    non_null = [v for v in cells if v is not None]
    kind = _classify_cells(cells)

    if column.dtype_override is not None:
        dtype_label = column.dtype_override
    elif kind == "bool":
        dtype_label = "bool"
    elif kind == "int":
        dtype_label = _int_dtype_label(non_null) if non_null else "int64"
    elif kind == "float":
        dtype_label = "float64"
    elif kind in ("date", "datetime"):
        dtype_label = "datetime64[ns]"
    else:
        distinct = len(set(map(str, non_null)))
        cap = max(CATEGORY_DISTINCT_CAP, CATEGORY_DISTINCT_FRACTION * row_count)
        dtype_label = "category" if distinct <= cap else "object"

    labels: list[str] = []
    for v in cells:
        label = _element_type_label(v)
        if label not in labels:
            labels.append(label)

    values_note = ""
    if dtype_label in ("category", "object"):
        seen: list = []
        for v in non_null:
            if v not in seen:
                seen.append(v)
            if len(seen) > MAX_EXAMPLE_VALUES:
                break
        if len(seen) < MAX_EXAMPLE_VALUES:
            values_note = f"All values are {seen!r}"
        else:
            values_note = f"{MAX_EXAMPLE_VALUES} example values are {seen[:MAX_EXAMPLE_VALUES]!r}"

    return ColumnProfile(
        index=index,
        name=column.name,
        non_null_count=len(non_null),
        dtype_label=dtype_label,
        element_type_labels=labels,
        values_note=values_note,
    )


def sample_lite(table: Table, max_rows: int = 20) -> Table:
    """First min(row_count, max_rows) rows, all columns kept."""
    if max_rows < 1:
        raise ValueError("max_rows must be >= 1")
    if table.row_count <= max_rows:
        return table
    columns = [Column(c.name, c.cells[:max_rows], c.dtype_override) for c in table.columns]
    return Table(table.name, columns)


def _coerce_text_column(raw: Sequence[Optional[str]]) -> list:
    """Apply the inference rules to a column of raw CSV strings."""
    non_null = [v for v in raw if v is not None]
    if non_null and all(v.lower() in _BOOL_LITERALS for v in non_null):
        return [None if v is None else _BOOL_LITERALS[v.lower()] for v in raw]
    if non_null and all(_INT_RE.fullmatch(v) for v in non_null):
        return [None if v is None else int(v) for v in raw]
    if non_null and all(_FLOAT_RE.fullmatch(v) for v in non_null):
        return [None if v is None else float(v) for v in raw]
    return list(raw)


def _load_csv(path: Path, name: str) -> Table:
    try:
        with open(path, newline="", encoding="utf-8-sig") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise EmptyTable(f"{path}: no header row")
            body = [row for row in reader if row]
    except (csv.Error, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not header:
        raise EmptyTable(f"{path}: header row has no fields")
    width = len(header)
    for lineno, row in enumerate(body, start=2):
        if len(row) != width:
            raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
    columns = []
    for j, col_name in enumerate(header):
        # Empty fields become nulls; every other value is kept verbatim
        # before inference ('N/A' is a value, not a missing entry).
        raw = [row[j] if row[j] != "" else None for row in body]
        columns.append(Column(col_name, _coerce_text_column(raw)))
    return Table(name, columns)


def _arrow_dtype_label(arrow_type) -> Optional[str]:
    import pyarrow as pa

    if pa.types.is_dictionary(arrow_type):
        return "category"
    if pa.types.is_boolean(arrow_type):
        return "bool"
    if pa.types.is_integer(arrow_type):
        return str(arrow_type)
    if pa.types.is_floating(arrow_type):
        return "float64" if str(arrow_type) == "double" else str(arrow_type)
    if pa.types.is_timestamp(arrow_type) or pa.types.is_date(arrow_type):
        return "datetime64[ns]"
    if pa.types.is_string(arrow_type) or pa.types.is_large_string(arrow_type):
        return "object"
    return None


def _load_parquet(path: Path, name: str) -> Table:
    import pyarrow.parquet as pq

    try:
        arrow = pq.read_table(path)
    except Exception as exc:  # pyarrow raises several unrelated types here
        raise ParseError(f"{path}: {exc}") from exc
    if arrow.num_columns == 0:
        raise EmptyTable(f"{path}: no columns")
    columns = []
    for field_idx in range(arrow.num_columns):
        col = arrow.column(field_idx)
        arrow_field = arrow.schema.field(field_idx)
        cells = col.to_pylist()
        columns.append(Column(arrow_field.name, cells, _arrow_dtype_label(arrow_field.type)))
    return Table(name, columns)


def load_table(path, format: Optional[str] = None, name: Optional[str] = None) -> Table:
    """Load a CSV or parquet file; format defaults to the file suffix."""
    path = Path(path)
    if format is None:
        format = "parquet" if path.suffix.lower() in (".parquet", ".pq") else "csv"
    if format not in ("csv", "parquet"):
        raise ValueError(f"unknown table format {format!r}")
    table_name = name if name is not None else path.stem
    if format == "csv":
        return _load_csv(path, table_name)
    return _load_parquet(path, table_name)
