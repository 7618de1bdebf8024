"""Dataset layout: per-split QA file plus one table file per dataset id.

Expected structure::

    <root>/<split>/qa.csv
    <root>/<split>/<dataset_id>/table.csv      (or table.parquet)

qa.csv columns: question, answer, type, columns_used, dataset — and
optionally column_types.  Gold answers stay strings exactly as shipped; the
evaluator does all normalization.
"""

from __future__ import annotations

import ast
import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .evaluator import Gold
from .pipeline import QueryInstance
from .prompting import AnswerType
from .tables import Table, load_table, sample_lite

SPLITS = ("train", "dev", "test")
LITE_ROWS = 20


class DataError(ValueError):
    """The dataset directory does not match the documented layout."""


@dataclass
class QaRow:
    """One line of a split's qa.csv."""

    question: str
    answer: Optional[str]
    answer_type: Optional[AnswerType]
    columns_used: Optional[list[str]]
    dataset_id: str
    column_types: Optional[list[str]] = None


def _parse_string_list(text: str) -> Optional[list[str]]:
    text = text.strip()
    if not text:
        return None
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return [part.strip() for part in text.split(",") if part.strip()]
    if isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value):
        return list(value)
    return None


def load_qa(root, split: str) -> list[QaRow]:
    """All QA rows of a split, in file order."""
    return load_qa_file(Path(root) / split / "qa.csv")


def load_qa_file(qa_path) -> list[QaRow]:
    """QA rows from one qa.csv file."""
    qa_path = Path(qa_path)
    if not qa_path.exists():
        raise DataError(f"missing QA file {qa_path}")
    rows: list[QaRow] = []
    with open(qa_path, newline="", encoding="utf-8-sig") as f:
        reader = csv.DictReader(f)
        required = {"question", "dataset"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{qa_path}: missing columns {sorted(missing)}")
        for lineno, raw in enumerate(reader, start=2):
            question = (raw.get("question") or "").strip()
            dataset_id = (raw.get("dataset") or "").strip()
            if not question or not dataset_id:
                raise DataError(f"{qa_path}:{lineno}: empty question or dataset id")
            type_text = (raw.get("type") or "").strip()
            try:
                answer_type = AnswerType(type_text) if type_text else None
            except ValueError:
                raise DataError(f"{qa_path}:{lineno}: unknown answer type {type_text!r}") from None
            answer = raw.get("answer")
            rows.append(
                QaRow(
                    question=question,
                    answer=answer if answer not in (None, "") else None,
                    answer_type=answer_type,
                    columns_used=_parse_string_list(raw.get("columns_used") or ""),
                    dataset_id=dataset_id,
                    column_types=_parse_string_list(raw.get("column_types") or ""),
                )
            )
    return rows


def table_path(root, split: str, dataset_id: str) -> Path:
    """The table file of a dataset id (CSV preferred, parquet otherwise)."""
    base = Path(root) / split / dataset_id
    for name in ("table.csv", "table.parquet"):
        candidate = base / name
        if candidate.exists():
            return candidate
    raise DataError(f"no table.csv or table.parquet under {base}")


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (dt.date, dt.datetime)):
        return value.isoformat()
    return str(value)


def write_table_csv(table: Table, path) -> None:
    """Materialize a table as CSV (used for the ≤20-row lite variant)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(table.column_names)
        for row in table.rows():
            writer.writerow([_cell_text(v) for v in row])


def load_instances(
    root,
    split: str,
    subtask: str = "full",
    lite_dir=None,
) -> list[QueryInstance]:
    """QueryInstances for a split, tables loaded once and shared.

    With subtask "lite" every table is cut to its first LITE_ROWS rows and
    materialized as CSV under lite_dir so sandbox executions see the same
    ≤20-row data the prompts describe.
    """
    if subtask not in ("full", "lite"):
        raise DataError(f"unknown subtask {subtask!r}")
    if subtask == "lite" and lite_dir is None:
        raise DataError("lite subtask requires a lite_dir to materialize tables")
    rows = load_qa(root, split)
    tables: dict[str, Table] = {}
    paths: dict[str, Path] = {}
    instances: list[QueryInstance] = []
    for row in rows:
        if row.dataset_id not in tables:
            source = table_path(root, split, row.dataset_id)
            table = load_table(source, name=row.dataset_id)
            if subtask == "lite":
                table = sample_lite(table, LITE_ROWS)
                source = Path(lite_dir) / f"{row.dataset_id}.csv"
                write_table_csv(table, source)
            tables[row.dataset_id] = table
            paths[row.dataset_id] = source
        source = paths[row.dataset_id]
        instances.append(
            QueryInstance(
                dataset_id=row.dataset_id,
                question=row.question,
                table=tables[row.dataset_id],
                table_path=str(source),
                table_format="parquet" if source.suffix == ".parquet" else "csv",
                gold_answer=row.answer,
                gold_type=row.answer_type,
                gold_columns=row.columns_used,
            )
        )
    return instances


def golds_from_qa(rows: list[QaRow]) -> list[Gold]:
    """Gold objects for scoring; every row must carry answer and type."""
    golds = []
    for row in rows:
        if row.answer is None or row.answer_type is None:
            raise DataError(f"QA row {row.question!r} lacks a gold answer or type")
        golds.append(Gold(row.answer, row.answer_type))
    return golds


def split_stats(root, split: str) -> dict:
    """Row/column/answer-type tallies for a split (plot-ready)."""
    rows = load_qa(root, split)
    table_rows: dict[str, int] = {}
    table_cols: dict[str, int] = {}
    for dataset_id in sorted({r.dataset_id for r in rows}):
        table = load_table(table_path(root, split, dataset_id), name=dataset_id)
        table_rows[dataset_id] = table.row_count
        table_cols[dataset_id] = table.column_count
    answer_types: dict[str, int] = {}
    used_column_types: dict[str, int] = {}
    for row in rows:
        if row.answer_type is not None:
            answer_types[row.answer_type.value] = answer_types.get(row.answer_type.value, 0) + 1
        for label in row.column_types or []:
            used_column_types[label] = used_column_types.get(label, 0) + 1
    return {
        "table_count": len(table_rows),
        "question_count": len(rows),
        "row_counts": table_rows,
        "column_counts": table_cols,
        "answer_types": dict(sorted(answer_types.items())),
        "columns_used_types": dict(sorted(used_column_types.items())),
    }
