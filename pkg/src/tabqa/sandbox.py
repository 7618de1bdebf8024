"""Isolated execution of generated programs via a child shim process.

Each call spawns one fresh child (no warm pool), writes a single-line JSON
request on its stdin, and reads a single-line JSON response from its stdout.
On timeout the whole process group is killed.  Isolation is process- and
environment-scoped (scratch working directory, minimal environment, proxy
variables pointed at a dead endpoint); no OS-level sandboxing is applied,
which is a documented limitation.
"""

from __future__ import annotations

import importlib.util
import json
import math
import os
import re
import signal
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .prompting import CuatBlock

DEFAULT_SHIM_MODULE = "tabqa_shim"
KILL_GRACE_MS = 500
_STDERR_TAIL_CHARS = 2000

ANSWER_KINDS = (
    "boolean",
    "number",
    "category",
    "list_number",
    "list_category",
    "null",
    "opaque",
)
FAILURE_KINDS = ("exception", "protocol", "nonzero_exit")


class SandboxSpawnError(RuntimeError):
    """The shim process could not be started (distinct from program failure)."""


@dataclass(frozen=True)
class AnswerValue:
    """A program's return value mapped onto the answer-type vocabulary."""

    kind: str
    value: object

    def __post_init__(self) -> None:
        if self.kind not in ANSWER_KINDS:
            raise ValueError(f"unknown answer kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}

    @classmethod
    def from_dict(cls, data: dict) -> "AnswerValue":
        return cls(data["kind"], data["value"])


@dataclass(frozen=True)
class GeneratedProgram:
    """A function body to execute, tagged with where it came from."""

    body: str
    source: str = "main"
    cuat: Optional[CuatBlock] = None

    def __post_init__(self) -> None:
        if not self.body.strip():
            raise ValueError("program body must be nonempty")
        if self.source != "main" and not re.fullmatch(r"fix_attempt\([1-9]\d*\)", self.source):
            raise ValueError(f"bad program source {self.source!r}")


@dataclass(frozen=True)
class ExecutionOutcome:
    """Success with an answer, a kinded failure with a message, or a timeout."""

    status: str
    answer: Optional[AnswerValue] = None
    failure_kind: Optional[str] = None
    message: str = ""

    def __post_init__(self) -> None:
        if self.status == "success":
            if self.answer is None or self.failure_kind is not None:
                raise ValueError("success carries an answer and no failure kind")
        elif self.status == "failure":
            if self.failure_kind not in FAILURE_KINDS:
                raise ValueError(f"bad failure kind {self.failure_kind!r}")
            if not self.message:
                raise ValueError("failure message must be nonempty")
        elif self.status != "timeout":
            raise ValueError(f"unknown outcome status {self.status!r}")

    @classmethod
    def success(cls, answer: AnswerValue) -> "ExecutionOutcome":
        return cls(status="success", answer=answer)

    @classmethod
    def failure(cls, kind: str, message: str) -> "ExecutionOutcome":
        return cls(status="failure", failure_kind=kind, message=message)

    @classmethod
    def timeout(cls, timeout_ms: int) -> "ExecutionOutcome":
        return cls(status="timeout", message=f"execution timed out after {timeout_ms} ms")

    @property
    def is_success(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "answer": self.answer.to_dict() if self.answer is not None else None,
            "failure_kind": self.failure_kind,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExecutionOutcome":
        answer = data.get("answer")
        return cls(
            status=data["status"],
            answer=AnswerValue.from_dict(answer) if answer is not None else None,
            failure_kind=data.get("failure_kind"),
            message=data.get("message", ""),
        )


def normalize_answer(raw) -> AnswerValue:
    """Map a shim JSON value onto the answer vocabulary (total function)."""
    if raw is None:
        return AnswerValue("null", None)
    if isinstance(raw, bool):
        return AnswerValue("boolean", raw)
    if isinstance(raw, (int, float)):
        if isinstance(raw, float) and not math.isfinite(raw):
            return AnswerValue("opaque", repr(raw))
        return AnswerValue("number", raw)
    if isinstance(raw, str):
        return AnswerValue("category", raw)
    if isinstance(raw, list):
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw) and raw:
            if all(not isinstance(v, float) or math.isfinite(v) for v in raw):
                return AnswerValue("list_number", raw)
        if all(isinstance(v, str) for v in raw):
            return AnswerValue("list_category", raw)
    return AnswerValue(
        "opaque", json.dumps(raw, separators=(",", ":"), sort_keys=True, ensure_ascii=False)
    )


def default_shim_command() -> list[str]:
    """The bundled shim, run by the current interpreter; raises if missing."""
    if importlib.util.find_spec(DEFAULT_SHIM_MODULE) is None:
        raise SandboxSpawnError(
            f"shim module {DEFAULT_SHIM_MODULE!r} is not importable; install it or pass shim_command"
        )
    return [sys.executable, "-m", DEFAULT_SHIM_MODULE]


def _child_env(scratch: str) -> dict[str, str]:
    env = {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "HOME": scratch,
        "TMPDIR": scratch,
        "LANG": "C.UTF-8",
        "PYTHONIOENCODING": "utf-8",
        "MPLBACKEND": "Agg",
        # Best-effort network cutoff: proxy everything into a closed port.
        "http_proxy": "http://127.0.0.1:9",
        "https_proxy": "http://127.0.0.1:9",
        "HTTP_PROXY": "http://127.0.0.1:9",
        "HTTPS_PROXY": "http://127.0.0.1:9",
        "NO_PROXY": "",
    }
    if "PYTHONPATH" in os.environ:
        env["PYTHONPATH"] = os.environ["PYTHONPATH"]
    return env


def _last_json_object(text: str) -> Optional[dict]:
    for line in reversed(text.splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError:
            return None
        return data if isinstance(data, dict) else None
    return None


def execute(
    program: GeneratedProgram,
    table_path,
    timeout_ms: int,
    table_format: Optional[str] = None,
    function_name: str = "answer",
    shim_command: Optional[list[str]] = None,
) -> ExecutionOutcome:
    """Run a program against a table in a fresh shim child; never raises for program faults."""
    if timeout_ms < 1:
        raise ValueError("timeout_ms must be >= 1")
    table_path = Path(table_path)
    if table_format is None:
        table_format = "parquet" if table_path.suffix.lower() in (".parquet", ".pq") else "csv"
    command = shim_command if shim_command is not None else default_shim_command()
    request = json.dumps(
        {
            "program": program.body,
            "table_path": str(table_path.resolve()),
            "function_name": function_name,
            "table_format": table_format,
        },
        ensure_ascii=False,
    )
    with tempfile.TemporaryDirectory(prefix="tabqa-sandbox-") as scratch:
        try:
            child = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                cwd=scratch,
                env=_child_env(scratch),
                start_new_session=True,
                text=True,
                encoding="utf-8",
                errors="replace",
            )
        except OSError as exc:
            raise SandboxSpawnError(f"could not start shim {command!r}: {exc}") from exc
        try:
            stdout, stderr = child.communicate(request + "\n", timeout=timeout_ms / 1000.0)
        except subprocess.TimeoutExpired:
            _kill_process_group(child)
            return ExecutionOutcome.timeout(timeout_ms)

    response = _last_json_object(stdout)
    if response is not None and "status" in response:
        if response["status"] == "ok":
            return ExecutionOutcome.success(normalize_answer(response.get("answer")))
        if response["status"] == "error":
            message = str(response.get("error_message", "")) or "unspecified shim error"
            return ExecutionOutcome.failure("exception", message)
        return ExecutionOutcome.failure(
            "protocol", f"shim reported unknown status {response['status']!r}"
        )
    if child.returncode != 0:
        tail = stderr[-_STDERR_TAIL_CHARS:].strip() or f"exit code {child.returncode}"
        return ExecutionOutcome.failure("nonzero_exit", tail)
    return ExecutionOutcome.failure(
        "protocol", f"shim produced no JSON response; stdout tail: {stdout[-200:]!r}"
    )


def _kill_process_group(child: subprocess.Popen) -> None:
    # start_new_session makes the child its own group leader.
    try:
        os.killpg(child.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass
    try:
        child.communicate(timeout=KILL_GRACE_MS / 1000.0)
    except subprocess.TimeoutExpired:
        child.kill()
        child.communicate()
