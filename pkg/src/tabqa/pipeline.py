"""Per-query orchestration: CUAT step, program step, execution, repair loop.

For each query the pipeline builds the step-one prompt, parses the predicted
columns/types/answer-type block, builds the step-two prompt, extracts the
generated program, and executes it in the sandbox.  Failures and timeouts
enter a bounded error-fixing loop that re-prompts with the faulty function
and its error message; when attempts are exhausted the final answer is the
literal string "Error".  Everything is captured in a RunRecord so a run can
be scored, replayed, and audited offline.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from . import sandbox
from .evaluator import ERROR_ANSWER
from .llm import Backend, GenerationRequest, GenerationResponse
from .prompting import (
    COLUMNS_USED_LEAD,
    DEFAULT_STOP_MARKER,
    AnswerType,
    ChatMessage,
    CuatBlock,
    CuatParseError,
    EmptyProgram,
    Exemplar,
    RenderConfig,
    build_errorfix_prompt,
    build_step1_prompt,
    build_step2_prompt,
    cuat_completion,
    extract_program,
    parse_cuat_response,
    render_faulty_function,
)
from .sandbox import AnswerValue, ExecutionOutcome, GeneratedProgram
from .tables import Table

SCHEMA_VERSION = 1
NO_CODE_MESSAGE = "model response contained no code"

Executor = Callable[[GeneratedProgram, "QueryInstance", "PipelineConfig"], ExecutionOutcome]


@dataclass
class QueryInstance:
    """One (table, question) pair plus optional gold metadata."""

    dataset_id: str
    question: str
    table: Table
    table_path: Optional[str] = None
    table_format: Optional[str] = None
    gold_answer: Optional[str] = None
    gold_type: Optional[AnswerType] = None
    gold_columns: Optional[list[str]] = None

    def __post_init__(self) -> None:
        if not self.question:
            raise ValueError("question must be nonempty")


@dataclass(frozen=True)
class PipelineConfig:
    """Sampling, rendering, and repair-loop settings."""

    main_temperature: float = 0.0
    main_top_p: float = 0.9
    fix_temperature: float = 1.0
    max_fix_attempts: int = 3
    main_sample_rows: int = 5
    fix_sample_rows: int = 10
    exemplar_count: int = 9
    timeout_ms: int = 30_000
    cell_char_cap: int = 50
    max_tokens: int = 1024
    stop_sequences: tuple[str, ...] = (DEFAULT_STOP_MARKER,)

    def __post_init__(self) -> None:
        if self.max_fix_attempts < 0:
            raise ValueError("max_fix_attempts must be >= 0")
        if self.timeout_ms < 1:
            raise ValueError("timeout_ms must be >= 1")

    def main_render(self) -> RenderConfig:
        return RenderConfig(self.main_sample_rows, self.cell_char_cap, self.exemplar_count)

    def fix_render(self) -> RenderConfig:
        return RenderConfig(self.fix_sample_rows, self.cell_char_cap, self.exemplar_count)


@dataclass
class FixAttempt:
    """One repair round: the prompt sent, the program obtained, its outcome."""

    prompt: list[ChatMessage]
    program: Optional[GeneratedProgram]
    outcome: ExecutionOutcome

    def to_dict(self) -> dict:
        return {
            "prompt": [{"role": m.role, "content": m.content} for m in self.prompt],
            "program": self.program.body if self.program is not None else None,
            "outcome": self.outcome.to_dict(),
        }


@dataclass
class RunRecord:
    """Complete trace of one query through the pipeline."""

    index: int
    dataset_id: str
    question: str
    p1: str
    cuat: Optional[CuatBlock]
    cuat_parse_failed: bool
    p2: str
    main_program: Optional[str]
    main_outcome: ExecutionOutcome
    fix_attempts: list[FixAttempt]
    final_answer: str
    status: str
    gold_answer: Optional[str] = None
    gold_type: Optional[str] = None
    main_prompt_tokens: int = 0
    main_completion_tokens: int = 0
    fix_prompt_tokens: int = 0
    fix_completion_tokens: int = 0
    generate_calls: int = 0
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if (self.final_answer == ERROR_ANSWER) != (self.status == "error_exhausted"):
            raise ValueError('final_answer must be "Error" iff status is error_exhausted')

    @property
    def fixed_attempt(self) -> Optional[int]:
        return fixed_attempt_index(self.status)

    def to_dict(self) -> dict:
        cuat = None
        if self.cuat is not None:
            cuat = {
                "columns_used": self.cuat.columns_used,
                "column_types": self.cuat.column_types,
                "answer_type": self.cuat.answer_type.value,
            }
        return {
            "schema_version": self.schema_version,
            "index": self.index,
            "dataset_id": self.dataset_id,
            "question": self.question,
            "p1": self.p1,
            "cuat": cuat,
            "cuat_parse_failed": self.cuat_parse_failed,
            "p2": self.p2,
            "main_program": self.main_program,
            "main_outcome": self.main_outcome.to_dict(),
            "fix_attempts": [a.to_dict() for a in self.fix_attempts],
            "final_answer": self.final_answer,
            "status": self.status,
            "gold_answer": self.gold_answer,
            "gold_type": self.gold_type,
            "main_prompt_tokens": self.main_prompt_tokens,
            "main_completion_tokens": self.main_completion_tokens,
            "fix_prompt_tokens": self.fix_prompt_tokens,
            "fix_completion_tokens": self.fix_completion_tokens,
            "generate_calls": self.generate_calls,
        }


def fixed_attempt_index(status: str) -> Optional[int]:
    """The i of a "fixed(i)" status, None otherwise."""
    if status.startswith("fixed(") and status.endswith(")"):
        return int(status[len("fixed(") : -1])
    return None


def cuat_comment_lines(cuat: CuatBlock) -> str:
    """The three CUAT comment lines as they open a program body."""
    return "  " + COLUMNS_USED_LEAD + cuat_completion(cuat)


def render_final_answer(value: AnswerValue) -> str:
    """Prediction-file form of an answer value."""
    if value.kind == "boolean":
        return "True" if value.value else "False"
    if value.kind == "number":
        return repr(value.value)
    if value.kind == "category":
        return str(value.value)
    if value.kind in ("list_number", "list_category"):
        return repr(value.value)
    if value.kind == "null":
        return "None"
    return str(value.value)


def sandbox_executor(
    program: GeneratedProgram, instance: QueryInstance, config: PipelineConfig
) -> ExecutionOutcome:
    """Default executor: run in the shim against the instance's table file."""
    if instance.table_path is None:
        raise ValueError(f"instance {instance.dataset_id!r} has no table_path to execute against")
    return sandbox.execute(
        program,
        instance.table_path,
        config.timeout_ms,
        table_format=instance.table_format,
    )


class _CallMeter:
    """Tallies generate calls and token usage for one record."""

    def __init__(self, backend: Backend) -> None:
        self.backend = backend
        self.calls = 0
        self.usage = {"main": [0, 0], "fix": [0, 0]}

    def generate(self, request: GenerationRequest, phase: str) -> GenerationResponse:
        response = self.backend.generate(request)
        self.calls += 1
        self.usage[phase][0] += response.prompt_token_count
        self.usage[phase][1] += response.completion_token_count
        return response


def answer_query(
    instance: QueryInstance,
    config: PipelineConfig,
    backend: Backend,
    exemplars: list[Exemplar],
    executor: Optional[Executor] = None,
    index: int = 0,
) -> RunRecord:
    """Run one query through generation, execution, and the repair loop."""
    if len(exemplars) < config.exemplar_count:
        raise ValueError(
            f"need {config.exemplar_count} exemplars, got {len(exemplars)}"
        )
    exemplars = exemplars[: config.exemplar_count]
    run = sandbox_executor if executor is None else executor
    meter = _CallMeter(backend)
    main_cfg = config.main_render()

    p1 = build_step1_prompt(exemplars, instance.table, instance.question, main_cfg)
    step1 = meter.generate(
        GenerationRequest(
            prompt=p1,
            temperature=config.main_temperature,
            top_p=config.main_top_p,
            max_tokens=config.max_tokens,
            stop_sequences=config.stop_sequences,
        ),
        "main",
    )
    cuat: Optional[CuatBlock] = None
    cuat_parse_failed = False
    try:
        cuat = parse_cuat_response(step1.text)
    except CuatParseError:
        cuat_parse_failed = True

    if cuat is not None:
        p2 = build_step2_prompt(exemplars, instance.table, instance.question, cuat, main_cfg)
    else:
        # Degraded form: re-prompt without a CUAT completion; no fix attempt spent.
        p2 = p1
    step2 = meter.generate(
        GenerationRequest(
            prompt=p2,
            temperature=config.main_temperature,
            top_p=config.main_top_p,
            max_tokens=config.max_tokens,
            stop_sequences=config.stop_sequences,
        ),
        "main",
    )

    main_program: Optional[GeneratedProgram] = None
    try:
        body = extract_program(step2.text)
        if cuat is not None and not body.lstrip().startswith(COLUMNS_USED_LEAD.strip()):
            body = cuat_comment_lines(cuat) + "\n" + body
        main_program = GeneratedProgram(body, source="main", cuat=cuat)
    except EmptyProgram:
        pass

    if main_program is not None:
        main_outcome = run(main_program, instance, config)
    else:
        main_outcome = ExecutionOutcome.failure("protocol", NO_CODE_MESSAGE)

    fix_attempts: list[FixAttempt] = []
    final_answer: str
    status: str
    if main_outcome.is_success:
        final_answer = render_final_answer(main_outcome.answer)
        status = "ok"
    else:
        current_body = main_program.body if main_program is not None else ""
        current_error = main_outcome.message
        fix_cfg = config.fix_render()
        fixed: Optional[ExecutionOutcome] = None
        for attempt_no in range(1, config.max_fix_attempts + 1):
            rendered_faulty = render_faulty_function(instance.table, current_body, fix_cfg)
            prompt = build_errorfix_prompt(
                rendered_faulty, current_error, instance.table, instance.question, fix_cfg
            )
            reply = meter.generate(
                GenerationRequest(
                    prompt=prompt,
                    temperature=config.fix_temperature,
                    top_p=config.main_top_p,
                    max_tokens=config.max_tokens,
                    stop_sequences=config.stop_sequences,
                ),
                "fix",
            )
            program: Optional[GeneratedProgram] = None
            try:
                body = extract_program(reply.text)
                program = GeneratedProgram(body, source=f"fix_attempt({attempt_no})", cuat=cuat)
            except EmptyProgram:
                outcome = ExecutionOutcome.failure("protocol", NO_CODE_MESSAGE)
            if program is not None:
                outcome = run(program, instance, config)
            fix_attempts.append(FixAttempt(prompt, program, outcome))
            if outcome.is_success:
                fixed = outcome
                break
            if program is not None:
                current_body = program.body
            current_error = outcome.message
        if fixed is not None:
            final_answer = render_final_answer(fixed.answer)
            status = f"fixed({len(fix_attempts)})"
        else:
            final_answer = ERROR_ANSWER
            status = "error_exhausted"

    return RunRecord(
        index=index,
        dataset_id=instance.dataset_id,
        question=instance.question,
        p1=p1,
        cuat=cuat,
        cuat_parse_failed=cuat_parse_failed,
        p2=p2,
        main_program=main_program.body if main_program is not None else None,
        main_outcome=main_outcome,
        fix_attempts=fix_attempts,
        final_answer=final_answer,
        status=status,
        gold_answer=instance.gold_answer,
        gold_type=instance.gold_type.value if instance.gold_type is not None else None,
        main_prompt_tokens=meter.usage["main"][0],
        main_completion_tokens=meter.usage["main"][1],
        fix_prompt_tokens=meter.usage["fix"][0],
        fix_completion_tokens=meter.usage["fix"][1],
        generate_calls=meter.calls,
    )


def record_to_line(record: RunRecord) -> str:
    """One JSONL line; stable field order, no timestamps, so runs byte-compare."""
    return json.dumps(record.to_dict(), ensure_ascii=False)


def count_existing_records(record_path) -> int:
    """Completed records in a partial run file (resume offset)."""
    path = Path(record_path)
    if not path.exists():
        return 0
    with open(path, encoding="utf-8") as f:
        return sum(1 for line in f if line.strip())


def run_batch(
    instances: list[QueryInstance],
    config: PipelineConfig,
    backend: Backend,
    parallelism: int = 1,
    exemplars: Optional[list[Exemplar]] = None,
    record_path=None,
    resume: bool = False,
    executor: Optional[Executor] = None,
) -> list[dict]:
    """Run all instances; returns record dicts in input order.

    With record_path, every finished record is appended as one JSONL line in
    input order, so an interrupted run resumes by skipping the lines already
    present.  The returned list always covers all instances.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if exemplars is None:
        from .exemplars import load_exemplars

        exemplars = load_exemplars()

    done: list[dict] = []
    offset = 0
    if record_path is not None and resume:
        offset = count_existing_records(record_path)
        if offset:
            with open(record_path, encoding="utf-8") as f:
                done = [json.loads(line) for line in f if line.strip()][: len(instances)]
            offset = len(done)
    pending = instances[offset:]
    if not pending:
        return done

    sink = None
    if record_path is not None:
        Path(record_path).parent.mkdir(parents=True, exist_ok=True)
        sink = open(record_path, "a" if resume else "w", encoding="utf-8")
    try:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [
                pool.submit(
                    answer_query, inst, config, backend, exemplars, executor, offset + i
                )
                for i, inst in enumerate(pending)
            ]
            try:
                for future in futures:
                    record = future.result().to_dict()
                    done.append(record)
                    if sink is not None:
                        sink.write(json.dumps(record, ensure_ascii=False) + "\n")
                        sink.flush()
            except BaseException:
                for future in futures:
                    future.cancel()
                raise
    finally:
        if sink is not None:
            sink.close()
    return done
