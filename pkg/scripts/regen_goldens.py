"""Regenerate the golden prompt files from the fixture tables.

The outputs are frozen under tests/golden/ and reviewed by hand; rerun this
only when the template itself is intentionally changed.
"""
from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from tablegen import employees_table, fifa_table  # noqa: E402

from tabqa.prompting import AnswerType, CuatBlock, RenderConfig, render_template  # noqa: E402

GOLDEN = ROOT / "tests" / "golden"


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    cfg = RenderConfig()
    fifa_block = render_template(
        fifa_table(),
        "How many players have the position 'ST'?",
        cfg,
        cuat=CuatBlock(["Position"], ["category"], AnswerType.NUMBER),
    )
    (GOLDEN / "fifa_step2_block.txt").write_text(fifa_block, encoding="utf-8")
    employees_f_inc = render_template(
        employees_table(), "Is our average employee older than 35?", cfg
    )
    (GOLDEN / "employees_f_inc.txt").write_text(employees_f_inc, encoding="utf-8")
    print("wrote", GOLDEN / "fifa_step2_block.txt")
    print("wrote", GOLDEN / "employees_f_inc.txt")


if __name__ == "__main__":
    main()
