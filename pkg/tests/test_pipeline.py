"""Pipeline orchestration: two-step flow, repair loop, batching, records."""
from __future__ import annotations

import json

import pytest

import scenarios
from tabqa.evaluator import score_run
from tabqa.llm import ScriptedBackend
from tabqa.pipeline import (
    NO_CODE_MESSAGE,
    PipelineConfig,
    QueryInstance,
    RunRecord,
    answer_query,
    count_existing_records,
    cuat_comment_lines,
    fixed_attempt_index,
    record_to_line,
    render_final_answer,
    run_batch,
    sandbox_executor,
)
from tabqa.prompting import (
    CODE_ERROR_MARKER,
    ERROR_OUTPUT_LEAD,
    ERRORFIX_REQUEST,
    ERRORFIX_SYSTEM,
    AnswerType,
    CuatBlock,
    cuat_completion,
)
from tabqa.sandbox import AnswerValue, ExecutionOutcome
from tabqa.tables import Column, Table


def test_clean_two_step_flow(employees, employees_csv, exemplars):
    record = scenarios.run_employees_ok(employees, employees_csv, exemplars)
    assert record.status == "ok"
    assert record.final_answer == "True"
    assert record.generate_calls == 2
    assert record.fix_attempts == []
    assert not record.cuat_parse_failed
    assert record.cuat == CuatBlock(["Age"], ["number[uint8]"], AnswerType.BOOLEAN)
    # Step-two prompt extends step one with the parsed column block.
    assert record.p2 == record.p1 + cuat_completion(record.cuat)
    assert record.main_program == (
        "  # The columns used to answer the question: ['Age']\n"
        "  # The types of the columns used to answer the question: ['number[uint8]']\n"
        "  # The type of the answer: boolean\n"
        "  # Calculate the average age of the employees\n"
        "  average_age = df['Age'].mean()  \n"
        "  # Return True if the average age is greater than 35, False otherwise\n"
        "  return average_age > 35"
    )
    assert record.main_outcome.is_success
    assert record.main_prompt_tokens > 0
    assert record.fix_prompt_tokens == 0


def test_repair_flow_fixes_faulty_program(lifters, lifters_csv, exemplars):
    record = scenarios.run_lifters_fixflow(lifters, lifters_csv, exemplars)
    assert record.status == "fixed(1)"
    assert record.fixed_attempt == 1
    assert record.final_answer == "True"
    assert record.generate_calls == 3
    assert record.main_outcome.failure_kind == "exception"
    assert record.main_outcome.message == scenarios.LIFTERS_ERROR
    assert len(record.fix_attempts) == 1
    attempt = record.fix_attempts[0]
    assert attempt.outcome.is_success
    assert attempt.program.source == "fix_attempt(1)"
    # The repair prompt carries the faulty function and its error verbatim.
    roles = [m.role for m in attempt.prompt]
    assert roles == ["system", "user", "assistant_prefill"]
    assert attempt.prompt[0].content == ERRORFIX_SYSTEM
    user = attempt.prompt[1].content
    assert user.startswith(ERRORFIX_REQUEST + scenarios.LIFTERS_QUESTION + "\n")
    assert scenarios.LIFTERS_FAULTY_BODY in user
    assert ERROR_OUTPUT_LEAD in user
    assert CODE_ERROR_MARKER + scenarios.LIFTERS_ERROR in user
    assert record.fix_prompt_tokens > 0


def test_repair_budget_exhausts_to_error(employees, employees_csv, exemplars):
    record = scenarios.run_persistent_failure(employees, employees_csv, exemplars)
    assert record.status == "error_exhausted"
    assert record.final_answer == "Error"
    assert record.generate_calls == 5
    assert len(record.fix_attempts) == 3
    assert all(not a.outcome.is_success for a in record.fix_attempts)
    messages = {a.outcome.message for a in record.fix_attempts}
    assert messages == {"invalid literal for int() with base 10: 'not a count'"}


def _tiny_table() -> Table:
    return Table("tiny", [Column("A", [1, 2, 3])])


def _ok_executor(answer: AnswerValue):
    def executor(program, instance, config):
        return ExecutionOutcome.success(answer)

    return executor


def test_cuat_parse_failure_degrades_without_fix(exemplars):
    backend = ScriptedBackend(
        script={"What is A?": ["I cannot tell which columns are needed.", "\n  return 42"]}
    )
    instance = QueryInstance(dataset_id="tiny", question="What is A?", table=_tiny_table())
    record = answer_query(
        instance,
        PipelineConfig(),
        backend,
        exemplars,
        executor=_ok_executor(AnswerValue("number", 42)),
    )
    assert record.cuat_parse_failed
    assert record.cuat is None
    assert record.p2 == record.p1
    assert record.status == "ok"
    assert record.final_answer == "42"
    assert record.generate_calls == 2
    assert record.fix_attempts == []
    # Without a parsed block nothing is prepended to the program body.
    assert record.main_program == "  return 42"


def test_codeless_response_is_protocol_failure(exemplars):
    backend = ScriptedBackend(
        script={
            "What is A?": [
                "['A']\n"
                "  # The types of the columns used to answer the question: ['number[uint8]']\n"
                "  # The type of the answer: number",
                "\n\n   \n",
            ]
        }
    )
    instance = QueryInstance(dataset_id="tiny", question="What is A?", table=_tiny_table())
    record = answer_query(
        instance,
        PipelineConfig(max_fix_attempts=0),
        backend,
        exemplars,
        executor=_ok_executor(AnswerValue("number", 1)),
    )
    assert record.main_program is None
    assert record.main_outcome.failure_kind == "protocol"
    assert record.main_outcome.message == NO_CODE_MESSAGE
    assert record.status == "error_exhausted"
    assert record.final_answer == "Error"
    assert record.generate_calls == 2


def test_mixed_batch_error_accounting(exemplars):
    records, golds = scenarios.run_mixed_batch(exemplars)
    assert len(records) == 20
    result = score_run(records, golds)
    assert result.main_failure_count == result.fixed_count + result.exhausted_count
    assert result.error_count == result.exhausted_count
    assert result.fixed_correct_count <= result.fixed_count
    assert result.main_failure_count == 12
    assert result.fixed_count == 6
    assert result.exhausted_count == 6
    assert result.fixed_correct_count == 3
    assert result.accuracy == 0.55
    for record, tag in zip(records, scenarios.MIXED_PLAN):
        if tag == "ok":
            assert record["status"] == "ok"
        elif tag == "bad":
            assert record["status"] == "error_exhausted"
            assert record["final_answer"] == "Error"
            assert len(record["fix_attempts"]) == 3
        else:
            assert record["status"] == f"fixed({tag[3:]})"


def test_run_batch_orders_and_persists(tmp_path, exemplars):
    record_path = tmp_path / "records.jsonl"
    records, _ = scenarios.run_mixed_batch(exemplars, record_path=record_path)
    assert [r["index"] for r in records] == list(range(20))
    lines = record_path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 20
    assert [json.loads(line)["index"] for line in lines] == list(range(20))
    assert lines == [json.dumps(r, ensure_ascii=False) for r in records]


def test_run_batch_resume_completes_partial_file(tmp_path, exemplars):
    full_path = tmp_path / "full.jsonl"
    scenarios.run_mixed_batch(exemplars, record_path=full_path)
    full_lines = full_path.read_text(encoding="utf-8").splitlines()

    partial_path = tmp_path / "partial.jsonl"
    partial_path.write_text("\n".join(full_lines[:7]) + "\n", encoding="utf-8")
    assert count_existing_records(partial_path) == 7
    records, _ = scenarios.run_mixed_batch(exemplars, record_path=partial_path, resume=True)
    assert len(records) == 20
    assert partial_path.read_text(encoding="utf-8").splitlines() == full_lines


def test_run_batch_resume_on_complete_file_runs_nothing(tmp_path, exemplars):
    record_path = tmp_path / "records.jsonl"
    first, _ = scenarios.run_mixed_batch(exemplars, record_path=record_path)
    # An exhausted backend would raise if any query were re-run.
    backend = ScriptedBackend(script={})
    records = run_batch(
        [
            QueryInstance(dataset_id=r["dataset_id"], question=r["question"], table=_tiny_table())
            for r in first
        ],
        PipelineConfig(),
        backend,
        exemplars=exemplars,
        record_path=record_path,
        resume=True,
    )
    assert records == first


def test_run_batch_rejects_bad_parallelism(exemplars):
    with pytest.raises(ValueError):
        run_batch([], PipelineConfig(), ScriptedBackend(script={}), parallelism=0)


def test_answer_query_requires_enough_exemplars(exemplars):
    instance = QueryInstance(dataset_id="tiny", question="Q?", table=_tiny_table())
    with pytest.raises(ValueError):
        answer_query(instance, PipelineConfig(), ScriptedBackend(script={}), exemplars[:4])


def test_sandbox_executor_requires_table_path():
    from tabqa.sandbox import GeneratedProgram

    instance = QueryInstance(dataset_id="tiny", question="Q?", table=_tiny_table())
    with pytest.raises(ValueError):
        sandbox_executor(GeneratedProgram("  return 1", source="main"), instance, PipelineConfig())


@pytest.mark.parametrize(
    "value,expected",
    [
        (AnswerValue("boolean", True), "True"),
        (AnswerValue("boolean", False), "False"),
        (AnswerValue("number", 6), "6"),
        (AnswerValue("number", 19.083333333333332), "19.083333333333332"),
        (AnswerValue("category", "Tunis"), "Tunis"),
        (AnswerValue("list_number", [399.0, 249.99, 189.0]), "[399.0, 249.99, 189.0]"),
        (AnswerValue("list_category", ["Darwin", "Bergen"]), "['Darwin', 'Bergen']"),
        (AnswerValue("null", None), "None"),
        (AnswerValue("opaque", '{"a":1}'), '{"a":1}'),
    ],
)
def test_render_final_answer(value, expected):
    assert render_final_answer(value) == expected


@pytest.mark.parametrize(
    "status,expected",
    [("fixed(1)", 1), ("fixed(12)", 12), ("ok", None), ("error_exhausted", None), ("fixed", None)],
)
def test_fixed_attempt_index(status, expected):
    assert fixed_attempt_index(status) == expected


def test_cuat_comment_lines_bytes():
    cuat = CuatBlock(["Age"], ["number[uint8]"], AnswerType.BOOLEAN)
    assert cuat_comment_lines(cuat) == (
        "  # The columns used to answer the question: ['Age']\n"
        "  # The types of the columns used to answer the question: ['number[uint8]']\n"
        "  # The type of the answer: boolean"
    )


def _minimal_record(**overrides) -> RunRecord:
    base = dict(
        index=0,
        dataset_id="d",
        question="Q?",
        p1="p1",
        cuat=None,
        cuat_parse_failed=False,
        p2="p1",
        main_program="  return 1",
        main_outcome=ExecutionOutcome.success(AnswerValue("number", 1)),
        fix_attempts=[],
        final_answer="1",
        status="ok",
    )
    base.update(overrides)
    return RunRecord(**base)


def test_run_record_rejects_inconsistent_error_state():
    with pytest.raises(ValueError):
        _minimal_record(final_answer="Error", status="ok")
    with pytest.raises(ValueError):
        _minimal_record(final_answer="1", status="error_exhausted")


def test_run_record_serialization_round_trip():
    record = _minimal_record(cuat=CuatBlock(["A"], ["number[uint8]"], AnswerType.NUMBER))
    line = record_to_line(record)
    data = json.loads(line)
    assert data["schema_version"] == 1
    assert data["cuat"] == {
        "columns_used": ["A"],
        "column_types": ["number[uint8]"],
        "answer_type": "number",
    }
    assert data["main_outcome"]["status"] == "success"
    assert data["final_answer"] == "1"
    assert data["generate_calls"] == 0


def test_query_instance_requires_question():
    with pytest.raises(ValueError):
        QueryInstance(dataset_id="d", question="", table=_tiny_table())


def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(max_fix_attempts=-1)
    with pytest.raises(ValueError):
        PipelineConfig(timeout_ms=0)
    cfg = PipelineConfig()
    assert cfg.main_render().sample_rows_n == 5
    assert cfg.fix_render().sample_rows_n == 10
