"""Fixtures for the shim suite: documented IPC tables and a meet roster."""
from __future__ import annotations

import csv
import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
REPO_ROOT = TESTS_DIR.parents[1]
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

FIVE_ROWS_CSV = REPO_ROOT / "docs" / "ipc_tables" / "five_rows.csv"
IPC_GOLDEN = REPO_ROOT / "docs" / "ipc_golden.jsonl"

WEIGHT_CLASSES = ["59 kg", "83 kg", "105 kg", "66 kg", "74 kg", "93 kg", "120 kg", "Open"]


@pytest.fixture(scope="session")
def five_rows_csv() -> Path:
    assert FIVE_ROWS_CSV.exists()
    return FIVE_ROWS_CSV


@pytest.fixture(scope="session")
def roster_csv(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("roster") / "lifters.csv"
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["Lifter Name", "Weight Class"])
        for i, weight_class in enumerate(WEIGHT_CLASSES):
            writer.writerow([f"Lifter {i}", weight_class])
    return path
