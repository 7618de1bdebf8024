"""Core of the shim: table loading, program execution, answer serialization."""

from __future__ import annotations

import csv
import datetime as dt
import math

SOURCE_HEADER = "import pandas as pd\nimport numpy as np\n\n"


def build_source(program: str, function_name: str) -> str:
    """Full module source around a function body; bare bodies get indented."""
    lines = program.split("\n")
    first = next((line for line in lines if line.strip()), "")
    if first and not first[0].isspace():
        lines = ["  " + line if line.strip() else line for line in lines]
    body = "\n".join(lines)
    return f"{SOURCE_HEADER}def {function_name}(df: pd.DataFrame):\n{body}\n"


def load_dataframe(table_path: str, table_format: str):
    """Load the table with the empty string as the only missing-value token."""
    import pandas as pd

    if table_format == "csv":
        df = pd.read_csv(table_path, keep_default_na=False, na_values=[""])
        # Column names must match the prompt's df.columns line verbatim
        # (read_csv mangles duplicates), so reassign from the raw header.
        with open(table_path, newline="", encoding="utf-8-sig") as f:
            header = next(csv.reader(f))
        if len(header) == df.shape[1]:
            df.columns = header
        return df
    if table_format == "parquet":
        return pd.read_parquet(table_path)
    raise ValueError(f"unknown table_format {table_format!r}")


def serialize_value(value):
    """Map a program's return value to a JSON-ready value per the protocol."""
    import numpy as np
    import pandas as pd

    if value is None or value is pd.NaT or value is pd.NA:
        return None
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, (str, np.str_)):
        return str(value)
    if isinstance(value, np.datetime64):
        ts = pd.Timestamp(value)
        return None if pd.isna(ts) else ts.isoformat()
    if isinstance(value, (pd.Timestamp, dt.datetime, dt.date)):
        return value.isoformat()
    if isinstance(value, (list, tuple, np.ndarray, pd.Series, pd.Index)):
        items = value.tolist() if hasattr(value, "tolist") else list(value)
        return [serialize_value(v) for v in items]
    if isinstance(value, (set, frozenset)):
        try:
            ordered = sorted(value)
        except TypeError:
            return str(value)
        return [serialize_value(v) for v in ordered]
    return str(value)


def run_once(request: dict) -> dict:
    """Execute one request; every failure becomes a structured error response."""
    try:
        program = request["program"]
        table_path = request["table_path"]
        function_name = request.get("function_name", "answer")
        table_format = request.get("table_format", "csv")
        df = load_dataframe(table_path, table_format)
        source = build_source(program, function_name)
        namespace: dict = {"__name__": "__tabqa_program__"}
        exec(compile(source, "<generated>", "exec"), namespace)
        result = namespace[function_name](df)
        return {"status": "ok", "answer": serialize_value(result)}
    except SystemExit as exc:
        return {"status": "error", "error_type": "SystemExit", "error_message": str(exc)}
    except Exception as exc:
        return {"status": "error", "error_type": type(exc).__name__, "error_message": str(exc)}
