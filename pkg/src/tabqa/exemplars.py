"""Loading of the bundled worked examples used for in-context prompting.

Each exemplar lives in an editable text file: a two-line metadata header
(question, table id), a ``---`` separator, then the completed function body
byte-for-byte as it should appear in prompts.  Tables referenced by id are
CSV files in the ``tables/`` subdirectory.  The bundled set holds nine
exemplars covering all five answer types.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from .prompting import Exemplar
from .tables import Table, load_table

BUNDLED_DIR = Path(__file__).parent / "data" / "exemplars"


class ExemplarFormatError(ValueError):
    """An exemplar file does not follow the header/---/program layout."""


def parse_exemplar_text(text: str, path: Path, table_cache: dict[str, Table]) -> Exemplar:
    """One exemplar from its file text; the program's bytes are kept verbatim."""
    if "\n---\n" not in text:
        raise ExemplarFormatError(f"{path}: missing '---' separator line")
    header, program = text.split("\n---\n", 1)
    fields: dict[str, str] = {}
    for line in header.split("\n"):
        if ":" not in line:
            raise ExemplarFormatError(f"{path}: bad header line {line!r}")
        key, value = line.split(":", 1)
        fields[key.strip()] = value.strip()
    missing = {"question", "table"} - fields.keys()
    if missing:
        raise ExemplarFormatError(f"{path}: missing header fields {sorted(missing)}")
    table_id = fields["table"]
    if table_id not in table_cache:
        table_path = path.parent / "tables" / f"{table_id}.csv"
        if not table_path.exists():
            raise ExemplarFormatError(f"{path}: referenced table {table_id!r} not found")
        table_cache[table_id] = load_table(table_path)
    if program.endswith("\n"):
        program = program[:-1]
    try:
        return Exemplar(table_cache[table_id], fields["question"], program)
    except ValueError as exc:
        raise ExemplarFormatError(f"{path}: {exc}") from exc


def load_exemplars(directory: Optional[Path] = None) -> list[Exemplar]:
    """All exemplars under directory (default: bundled set), in filename order."""
    directory = Path(directory) if directory is not None else BUNDLED_DIR
    paths = sorted(directory.glob("*.txt"))
    if not paths:
        raise ExemplarFormatError(f"no exemplar files found in {directory}")
    table_cache: dict[str, Table] = {}
    return [parse_exemplar_text(p.read_text(encoding="utf-8"), p, table_cache) for p in paths]
