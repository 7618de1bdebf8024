"""Prompt assembly and response parsing for two-step program generation.

The model is prompted with a Python function skeleton per table: a TODO
comment naming the question, a ``def answer(df: pd.DataFrame):`` header, a
docstring holding a CSV-style column description and the first n sample
rows, and a column-assignment line.  Step one ends the skeleton at
``# The columns used to answer the question: `` so the model predicts the
relevant columns, their types, and the answer type (the CUAT block); step
two replays the same prompt with the parsed CUAT block appended so the
model completes the function body.  Error fixing uses a role-structured
prompt that embeds the faulty function and its runtime error message.

All rendering is pure and deterministic: identical inputs yield identical
bytes, and the step-one prompt is always a strict prefix of step two.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from .tables import Table

TODO_PREFIX = "# TODO: complete the following function. It should give the answer to: "
FUNCTION_HEADER = "def answer(df: pd.DataFrame):"
CD_HEADER = "#,Column,Non-Null CounT,Dtype,Types of Elements,Values"
COLUMNS_USED_LEAD = "# The columns used to answer the question: "
COLUMN_TYPES_LEAD = "# The types of the columns used to answer the question: "
ANSWER_TYPE_LEAD = "# The type of the answer: "
CODE_ERROR_MARKER = "# __CODE_ERROR__: "
ERROR_OUTPUT_LEAD = "# The function outputs the following error:"
DEFAULT_STOP_MARKER = "# TODO:"

ERRORFIX_SYSTEM = (
    "You are an assistant tasked with helping a user fix a code error. The user has "
    "written a function that is supposed to answer a question about a table."
)
ERRORFIX_REQUEST = (
    "# Help me fix the code error of the following function by rewriting it. "
    "The function should return the answer to the question: "
)


class AnswerType(str, Enum):
    """The five answer types a question can carry."""

    BOOLEAN = "boolean"
    CATEGORY = "category"
    NUMBER = "number"
    LIST_CATEGORY = "list[category]"
    LIST_NUMBER = "list[number]"


class CuatParseError(ValueError):
    """The columns/types/answer-type block could not be parsed from a response."""


class EmptyProgram(ValueError):
    """A model response contained no program lines."""


@dataclass(frozen=True)
class RenderConfig:
    """Knobs of the prompt template: n sample rows, n_c char cap, k exemplars."""

    sample_rows_n: int = 5
    cell_char_cap: int = 50
    exemplar_count_k: int = 9

    def __post_init__(self) -> None:
        if min(self.sample_rows_n, self.cell_char_cap, self.exemplar_count_k) < 1:
            raise ValueError("RenderConfig fields must all be >= 1")


@dataclass
class CuatBlock:
    """Predicted columns used, their types, and the answer type."""

    columns_used: list[str]
    column_types: list[str]
    answer_type: AnswerType

    def __post_init__(self) -> None:
        if not self.columns_used:
            raise ValueError("columns_used must be nonempty")
        if len(self.columns_used) != len(self.column_types):
            raise ValueError("columns_used and column_types must have equal length")
        self.answer_type = AnswerType(self.answer_type)


@dataclass
class Exemplar:
    """One worked example: its table, question, and completed function body.

    The program starts with the three CUAT comment lines and keeps the
    author's bytes verbatim when rendered into a prompt.
    """

    table: Table
    question: str
    program: str

    def __post_init__(self) -> None:
        if not self.program.startswith("  " + COLUMNS_USED_LEAD):
            raise ValueError(
                f"exemplar program for {self.question!r} must start with the CUAT comments"
            )
        parse_cuat_response(self.program)


@dataclass(frozen=True)
class ChatMessage:
    """One role-tagged message; assistant_prefill seeds the model's reply."""

    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant_prefill"):
            raise ValueError(f"unknown role {self.role!r}")


Prompt = Union[str, list[ChatMessage]]


def _render_cell(value) -> str:
    if value is None:
        return "nan"
    return str(value)


def render_sample_rows(table: Table, n: int, n_c: int) -> str:
    """First min(n, row_count) rows, cells capped at n_c chars, right-aligned."""
    if n < 0:
        raise ValueError("n must be >= 0")
    headers = [""] + [c.name[:n_c] for c in table.columns]
    grid = [
        [str(i)] + [_render_cell(v)[:n_c] for v in row]
        for i, row in enumerate(table.rows(limit=n))
    ]
    widths = [
        max([len(headers[j])] + [len(row[j]) for row in grid])
        for j in range(len(headers))
    ]
    lines = [
        "  ".join(cell.rjust(widths[j]) for j, cell in enumerate(row)).rstrip()
        for row in [headers] + grid
    ]
    return "\n".join(lines)


def render_function_skeleton(table: Table, cfg: RenderConfig) -> str:
    """Function header, docstring (column description + sample rows), column assignment."""
    lines = [FUNCTION_HEADER, '  """', "    " + CD_HEADER]
    for p in table.profiles():
        labels = ", ".join(p.element_type_labels)
        lines.append(
            f"    {p.index},{p.name},{p.non_null_count},{p.dtype_label},[{labels}],{p.values_note}"
        )
    shown = min(cfg.sample_rows_n, table.row_count)
    lines.append(f"    The first {shown} rows from the dataframe:")
    sample = render_sample_rows(table, cfg.sample_rows_n, cfg.cell_char_cap)
    lines.extend("    " + row for row in sample.split("\n"))
    lines.append('  """')
    lines.append(f"  df.columns = {table.column_names!r}")
    return "\n".join(lines)


def cuat_completion(cuat: CuatBlock) -> str:
    """The text that extends a step-one prompt into a step-two prompt."""
    return (
        f"{cuat.columns_used!r}\n"
        f"  {COLUMN_TYPES_LEAD}{cuat.column_types!r}\n"
        f"  {ANSWER_TYPE_LEAD}{cuat.answer_type.value}"
    )


def render_template(
    table: Table, question: str, cfg: RenderConfig, cuat: Optional[CuatBlock] = None
) -> str:
    """The full prompt template f(T,Q); without cuat it is the incomplete f_inc."""
    head = (
        TODO_PREFIX
        + question
        + "\n"
        + render_function_skeleton(table, cfg)
        + "\n  "
        + COLUMNS_USED_LEAD
    )
    if cuat is None:
        return head
    return head + cuat_completion(cuat)


def render_exemplar_block(exemplar: Exemplar, cfg: RenderConfig) -> str:
    """One exemplar as prompted: f_inc(T_i,Q_i) completed by the stored program."""
    lead = "  " + COLUMNS_USED_LEAD
    if not exemplar.program.startswith(lead):
        raise ValueError("exemplar program must start with the CUAT comments")
    return render_template(exemplar.table, exemplar.question, cfg) + exemplar.program[len(lead):]


def build_step1_prompt(
    exemplars: list[Exemplar], table: Table, question: str, cfg: RenderConfig
) -> str:
    """p1: exemplar blocks then f_inc(T,Q), separated by blank lines."""
    blocks = [render_exemplar_block(e, cfg) for e in exemplars]
    blocks.append(render_template(table, question, cfg))
    return "\n\n".join(blocks)


def build_step2_prompt(
    exemplars: list[Exemplar],
    table: Table,
    question: str,
    cuat: CuatBlock,
    cfg: RenderConfig,
) -> str:
    """p2: p1 extended by the CUAT completion; p1 is a strict prefix."""
    return build_step1_prompt(exemplars, table, question, cfg) + cuat_completion(cuat)


def _first_bracketed_list(text: str, start: int = 0) -> tuple[list, int]:
    """Parse the first [...] literal at or after start; returns (value, end index)."""
    open_idx = text.find("[", start)
    if open_idx < 0:
        raise CuatParseError("no bracketed list found")
    depth = 0
    quote: Optional[str] = None
    i = open_idx
    while i < len(text):
        ch = text[i]
        if quote is not None:
            if ch == "\\":
                i += 2
                continue
            if ch == quote:
                quote = None
        elif ch in ("'", '"'):
            quote = ch
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                literal = text[open_idx : i + 1]
                try:
                    value = ast.literal_eval(literal)
                except (ValueError, SyntaxError) as exc:
                    raise CuatParseError(f"unparseable list literal: {literal!r}") from exc
                return value, i + 1
        i += 1
    raise CuatParseError("unterminated bracketed list")


def parse_cuat_response(text: str) -> CuatBlock:
    """Recover the CUAT block from a step-one continuation or a full program."""
    columns, pos = _first_bracketed_list(text)
    types_match = re.compile(
        r"^\s*#\s*The types of the columns used to answer the question:", re.MULTILINE
    ).search(text, pos)
    if types_match is None:
        raise CuatParseError("missing column-types line")
    column_types, pos = _first_bracketed_list(text, types_match.end())
    answer_match = re.compile(
        r"^\s*#\s*The type of the answer:[ \t]*(.*)$", re.MULTILINE
    ).search(text, pos)
    if answer_match is None:
        raise CuatParseError("missing answer-type line")
    answer_token = answer_match.group(1).strip()
    if not (
        isinstance(columns, list)
        and isinstance(column_types, list)
        and all(isinstance(c, str) for c in columns)
        and all(isinstance(t, str) for t in column_types)
    ):
        raise CuatParseError("columns and types must be lists of strings")
    try:
        return CuatBlock(columns, column_types, AnswerType(answer_token))
    except ValueError as exc:
        raise CuatParseError(str(exc)) from exc


def _strip_code_fences(lines: list[str]) -> list[str]:
    fence_idx = [i for i, line in enumerate(lines) if line.lstrip().startswith("```")]
    if not fence_idx:
        return lines
    if len(fence_idx) >= 2:
        return lines[fence_idx[0] + 1 : fence_idx[1]]
    return [line for i, line in enumerate(lines) if i != fence_idx[0]]


def extract_program(text: str, stop_marker: str = DEFAULT_STOP_MARKER) -> str:
    """Function-body lines of a model response; fences and trailing prose dropped."""
    lines = _strip_code_fences(text.split("\n"))
    kept: list[str] = []
    seen_return = False
    for line in lines:
        if stop_marker and line.startswith(stop_marker):
            break
        if seen_return and line and not line[0].isspace():
            break
        if line.strip().startswith("return"):
            seen_return = True
        kept.append(line)
    while kept and not kept[0].strip():
        kept.pop(0)
    while kept and not kept[-1].strip():
        kept.pop()
    if not kept:
        raise EmptyProgram("model response contained no code")
    return "\n".join(kept)


def render_faulty_function(table: Table, program: str, cfg: RenderConfig) -> str:
    """f(T,Q)||P as embedded in the error-fix request: skeleton plus failed body."""
    skeleton = render_function_skeleton(table, cfg)
    if not program:
        return skeleton
    return skeleton + "\n" + program


def fold_error_message(message: str) -> str:
    """Error text as comment lines: newlines continue under a '# ' prefix."""
    return message.replace("\n", "\n# ")


def extract_code_error(text: str) -> str:
    """Recover the exact error message from a rendered error-fix user message."""
    if text.startswith(CODE_ERROR_MARKER):
        pos = len(CODE_ERROR_MARKER)
    else:
        idx = text.find("\n" + CODE_ERROR_MARKER)
        if idx < 0:
            raise ValueError("no code-error marker found")
        pos = idx + 1 + len(CODE_ERROR_MARKER)
    lines = text[pos:].split("\n")
    message = [lines[0]]
    for line in lines[1:]:
        if not line.startswith("# "):
            break
        message.append(line[2:])
    return "\n".join(message)


def build_errorfix_prompt(
    rendered_faulty: str,
    error_message: str,
    table: Table,
    question: str,
    cfg: RenderConfig,
) -> list[ChatMessage]:
    """Role messages asking the model to rewrite a function that raised an error."""
    if not error_message:
        raise ValueError("error_message must be nonempty")
    user = (
        ERRORFIX_REQUEST
        + question
        + "\n"
        + rendered_faulty
        + "\n"
        + ERROR_OUTPUT_LEAD
        + "\n"
        + CODE_ERROR_MARKER
        + fold_error_message(error_message)
    )
    return [
        ChatMessage("system", ERRORFIX_SYSTEM),
        ChatMessage("user", user),
        ChatMessage("assistant_prefill", render_function_skeleton(table, cfg)),
    ]
