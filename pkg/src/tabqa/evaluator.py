"""Relaxed-accuracy scoring of predicted answers against gold answers.

Comparison rules by answer type: booleans match through a case-insensitive
synonym table (yes/true/y/1 and no/false/n/0), numbers match after decimal
truncation toward zero at two places, categories match after trimming
surrounding whitespace and quotes (case-sensitive), and lists match
elementwise under the element type's rule — as a multiset by default, in
order behind a flag.  The literal prediction "Error" is always incorrect.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from decimal import Decimal, ROUND_DOWN
from typing import Optional, Sequence

from .prompting import AnswerType

ERROR_ANSWER = "Error"

TRUE_LITERALS = frozenset({"yes", "true", "y", "1"})
FALSE_LITERALS = frozenset({"no", "false", "n", "0"})


class NonFinite(ValueError):
    """truncate2 was given an infinite or NaN value."""


class LengthMismatch(ValueError):
    """Predictions and golds have different lengths."""


@dataclass(frozen=True)
class Gold:
    """One gold answer exactly as shipped in the dataset."""

    answer: str
    answer_type: AnswerType


@dataclass
class InstanceScore:
    correct: bool
    reason: str


@dataclass
class EvalResult:
    """Aggregate relaxed accuracy plus error-fix bookkeeping."""

    instance_scores: list[InstanceScore]
    accuracy: float
    per_type_accuracy: dict[str, float]
    error_count: int
    main_failure_count: int = 0
    fixed_count: int = 0
    exhausted_count: int = 0
    fixed_correct_count: int = 0

    def to_dict(self) -> dict:
        return {
            "count": len(self.instance_scores),
            "accuracy": self.accuracy,
            "per_type_accuracy": self.per_type_accuracy,
            "error_count": self.error_count,
            "main_failure_count": self.main_failure_count,
            "fixed_count": self.fixed_count,
            "exhausted_count": self.exhausted_count,
            "fixed_correct_count": self.fixed_correct_count,
        }


def truncate2(x: float) -> float:
    """Decimal truncation toward zero at two places."""
    if not math.isfinite(x):
        raise NonFinite(repr(x))
    return float(Decimal(str(x)).quantize(Decimal("0.01"), rounding=ROUND_DOWN))


def _trim(text: str) -> str:
    return text.strip().strip("'\"")


def _parse_boolean(text: str) -> Optional[bool]:
    token = _trim(text).lower()
    if token in TRUE_LITERALS:
        return True
    if token in FALSE_LITERALS:
        return False
    return None


def _parse_number(text: str) -> Optional[float]:
    token = _trim(text)
    try:
        return float(token)
    except ValueError:
        return None


def _parse_list(text: str) -> Optional[list[str]]:
    """Element strings of a bracketed or comma-separated list."""
    stripped = text.strip()
    if stripped.startswith("[") and stripped.endswith("]"):
        try:
            value = ast.literal_eval(stripped)
        except (ValueError, SyntaxError):
            value = None
        if isinstance(value, (list, tuple)):
            return [v if isinstance(v, str) else repr(v) for v in value]
        stripped = stripped[1:-1]
    if not stripped.strip():
        return []
    return [part.strip() for part in stripped.split(",")]


def _compare(pred: str, gold: str, answer_type: AnswerType, ordered: bool) -> InstanceScore:
    if pred.strip() == ERROR_ANSWER:
        return InstanceScore(False, "error answer")
    if answer_type is AnswerType.BOOLEAN:
        pred_value = _parse_boolean(pred)
        gold_value = _parse_boolean(gold)
        if pred_value is None or gold_value is None:
            return InstanceScore(False, "unparseable boolean")
        return InstanceScore(pred_value == gold_value, "boolean")
    if answer_type is AnswerType.NUMBER:
        pred_value = _parse_number(pred)
        gold_value = _parse_number(gold)
        if pred_value is None or gold_value is None:
            return InstanceScore(False, "unparseable number")
        try:
            return InstanceScore(truncate2(pred_value) == truncate2(gold_value), "number")
        except NonFinite:
            return InstanceScore(False, "non-finite number")
    if answer_type is AnswerType.CATEGORY:
        return InstanceScore(_trim(pred) == _trim(gold), "category")
    element_type = (
        AnswerType.NUMBER if answer_type is AnswerType.LIST_NUMBER else AnswerType.CATEGORY
    )
    pred_items = _parse_list(pred)
    gold_items = _parse_list(gold)
    if pred_items is None or gold_items is None:
        return InstanceScore(False, "unparseable list")
    if len(pred_items) != len(gold_items):
        return InstanceScore(False, "list length mismatch")
    if ordered:
        match = all(
            _compare(p, g, element_type, ordered).correct
            for p, g in zip(pred_items, gold_items)
        )
        return InstanceScore(match, "list (ordered)")
    remaining = list(gold_items)
    for p in pred_items:
        hit = next(
            (i for i, g in enumerate(remaining) if _compare(p, g, element_type, ordered).correct),
            None,
        )
        if hit is None:
            return InstanceScore(False, "list element unmatched")
        remaining.pop(hit)
    return InstanceScore(True, "list (multiset)")


def compare_relaxed(
    pred: str, gold: str, answer_type: AnswerType, ordered_lists: bool = False
) -> bool:
    """Relaxed equality of a predicted answer string against the gold string."""
    return _compare(pred, gold, AnswerType(answer_type), ordered_lists).correct


def _record_field(record, name, default=None):
    if isinstance(record, dict):
        return record.get(name, default)
    return getattr(record, name, default)


def score_run(records: Sequence, golds: Sequence[Gold], ordered_lists: bool = False) -> EvalResult:
    """Score records (RunRecords or their dict form) against aligned golds."""
    if len(records) != len(golds):
        raise LengthMismatch(f"{len(records)} records vs {len(golds)} golds")
    scores: list[InstanceScore] = []
    by_type: dict[str, list[bool]] = {}
    error_count = 0
    main_failures = 0
    fixed = 0
    exhausted = 0
    fixed_correct = 0
    for record, gold in zip(records, golds):
        pred = _record_field(record, "final_answer", "")
        score = _compare(pred, gold.answer, gold.answer_type, ordered_lists)
        scores.append(score)
        by_type.setdefault(gold.answer_type.value, []).append(score.correct)
        if pred.strip() == ERROR_ANSWER:
            error_count += 1
        status = _record_field(record, "status", "")
        if status:
            was_fixed = status.startswith("fixed(")
            if was_fixed:
                fixed += 1
                if score.correct:
                    fixed_correct += 1
            if status == "error_exhausted":
                exhausted += 1
            outcome = _record_field(record, "main_outcome")
            outcome_status = (
                outcome.get("status") if isinstance(outcome, dict) else getattr(outcome, "status", None)
            )
            if outcome_status is not None and outcome_status != "success":
                main_failures += 1
    accuracy = sum(s.correct for s in scores) / len(scores) if scores else 0.0
    return EvalResult(
        instance_scores=scores,
        accuracy=accuracy,
        per_type_accuracy={
            t: sum(v) / len(v) for t, v in sorted(by_type.items())
        },
        error_count=error_count,
        main_failure_count=main_failures,
        fixed_count=fixed,
        exhausted_count=exhausted,
        fixed_correct_count=fixed_correct,
    )


def score_predictions(
    predictions: Sequence[str], golds: Sequence[Gold], ordered_lists: bool = False
) -> EvalResult:
    """Score bare prediction strings (no run metadata) against golds."""
    records = [{"final_answer": p} for p in predictions]
    return score_run(records, golds, ordered_lists)
