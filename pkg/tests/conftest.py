"""Shared fixtures: deterministic tables, bundled exemplars, CSV materializations."""
from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
REPO_ROOT = TESTS_DIR.parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

from tablegen import employees_table, fifa_table, lifters_table  # noqa: E402

from tabqa.datasets import write_table_csv  # noqa: E402
from tabqa.exemplars import load_exemplars  # noqa: E402

GOLDEN_DIR = TESTS_DIR / "golden"
MINICORPUS_DIR = REPO_ROOT / "data" / "minicorpus"


@pytest.fixture(scope="session")
def fifa():
    return fifa_table()


@pytest.fixture(scope="session")
def employees():
    return employees_table()


@pytest.fixture(scope="session")
def lifters():
    return lifters_table()


@pytest.fixture(scope="session")
def exemplars():
    return load_exemplars()


@pytest.fixture(scope="session")
def employees_csv(tmp_path_factory, employees):
    path = tmp_path_factory.mktemp("tables") / "employees.csv"
    write_table_csv(employees, path)
    return path


@pytest.fixture(scope="session")
def lifters_csv(tmp_path_factory, lifters):
    path = tmp_path_factory.mktemp("tables") / "lifters.csv"
    write_table_csv(lifters, path)
    return path


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN_DIR


@pytest.fixture(scope="session")
def minicorpus_dir():
    return MINICORPUS_DIR
