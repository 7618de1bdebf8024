"""Subprocess executor: answer normalization, failure kinds, timeout kills."""
from __future__ import annotations

import json
import sys
import time

import pytest

from tabqa.sandbox import (
    AnswerValue,
    ExecutionOutcome,
    GeneratedProgram,
    SandboxSpawnError,
    default_shim_command,
    execute,
    normalize_answer,
)


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("sandbox") / "small.csv"
    path.write_text("Name,Age\nAda,30\nBo,41\nCy,28\n", encoding="utf-8")
    return path


@pytest.mark.parametrize(
    "raw,kind,value",
    [
        (None, "null", None),
        (True, "boolean", True),
        (5, "number", 5),
        (5.5, "number", 5.5),
        ("text", "category", "text"),
        ([1, 2.5], "list_number", [1, 2.5]),
        (["a", "b"], "list_category", ["a", "b"]),
        ([], "list_category", []),
    ],
)
def test_normalize_answer_kinds(raw, kind, value):
    answer = normalize_answer(raw)
    assert answer.kind == kind
    assert answer.value == value


def test_normalize_answer_opaque_cases():
    assert normalize_answer(float("inf")).kind == "opaque"
    assert normalize_answer([1, "a"]).kind == "opaque"
    assert normalize_answer([True, False]).kind == "opaque"
    assert normalize_answer({"a": 1}) == AnswerValue("opaque", '{"a":1}')


def test_answer_value_round_trip():
    answer = AnswerValue("list_number", [1, 2])
    assert AnswerValue.from_dict(answer.to_dict()) == answer
    with pytest.raises(ValueError):
        AnswerValue("integer", 1)


def test_outcome_invariants():
    with pytest.raises(ValueError):
        ExecutionOutcome(status="success")
    with pytest.raises(ValueError):
        ExecutionOutcome(status="failure", failure_kind="weird", message="m")
    with pytest.raises(ValueError):
        ExecutionOutcome(status="failure", failure_kind="exception", message="")
    ok = ExecutionOutcome.success(AnswerValue("number", 1))
    assert ok.is_success
    assert ExecutionOutcome.from_dict(ok.to_dict()) == ok
    bad = ExecutionOutcome.failure("exception", "boom")
    assert ExecutionOutcome.from_dict(bad.to_dict()) == bad


def test_generated_program_validation():
    with pytest.raises(ValueError):
        GeneratedProgram(body="   ")
    with pytest.raises(ValueError):
        GeneratedProgram(body="  return 1", source="retry")
    assert GeneratedProgram(body="  return 1", source="fix_attempt(2)").source == "fix_attempt(2)"


def test_default_shim_command_uses_current_interpreter():
    assert default_shim_command() == [sys.executable, "-m", "tabqa_shim"]


def test_execute_success(small_csv):
    outcome = execute(GeneratedProgram("  return df.shape[0]"), small_csv, timeout_ms=30000)
    assert outcome.is_success
    assert outcome.answer == AnswerValue("number", 3)


def test_execute_exception_message(small_csv):
    outcome = execute(GeneratedProgram("  return int('abc')"), small_csv, timeout_ms=30000)
    assert outcome.status == "failure"
    assert outcome.failure_kind == "exception"
    assert outcome.message == "invalid literal for int() with base 10: 'abc'"


def test_execute_timeout_kills_group(small_csv):
    start = time.monotonic()
    outcome = execute(
        GeneratedProgram("  while True:\n    pass"), small_csv, timeout_ms=1500
    )
    elapsed = time.monotonic() - start
    assert outcome.status == "timeout"
    assert outcome.message == "execution timed out after 1500 ms"
    assert elapsed < 1.5 + 0.5 + 0.5


def test_execute_protocol_failure_on_non_json(small_csv):
    outcome = execute(
        GeneratedProgram("  return 1"),
        small_csv,
        timeout_ms=5000,
        shim_command=[sys.executable, "-c", "print('not json')"],
    )
    assert outcome.status == "failure"
    assert outcome.failure_kind == "protocol"


def test_execute_nonzero_exit(small_csv):
    outcome = execute(
        GeneratedProgram("  return 1"),
        small_csv,
        timeout_ms=5000,
        shim_command=[sys.executable, "-c", "import sys; sys.stderr.write('died'); sys.exit(3)"],
    )
    assert outcome.status == "failure"
    assert outcome.failure_kind == "nonzero_exit"
    assert "died" in outcome.message


def test_execute_spawn_error(small_csv):
    with pytest.raises(SandboxSpawnError):
        execute(
            GeneratedProgram("  return 1"),
            small_csv,
            timeout_ms=5000,
            shim_command=["/nonexistent/shim-binary"],
        )


def test_execute_rejects_bad_timeout(small_csv):
    with pytest.raises(ValueError):
        execute(GeneratedProgram("  return 1"), small_csv, timeout_ms=0)


def test_execute_child_environment_is_scoped(small_csv):
    body = (
        "  import os\n"
        "  return [os.environ['http_proxy'], os.environ['HOME'] == os.getcwd()]"
    )
    outcome = execute(GeneratedProgram(body), small_csv, timeout_ms=30000)
    assert outcome.is_success
    assert outcome.answer.kind == "opaque"
    assert json.loads(outcome.answer.value) == ["http://127.0.0.1:9", True]


def test_execute_parquet_by_suffix(tmp_path):
    import pyarrow as pa
    import pyarrow.parquet as pq

    path = tmp_path / "t.parquet"
    pq.write_table(pa.table({"n": [1, 2, 3, 4]}), path)
    outcome = execute(GeneratedProgram("  return df['n'].sum()"), path, timeout_ms=30000)
    assert outcome.is_success
    assert outcome.answer == AnswerValue("number", 10)
