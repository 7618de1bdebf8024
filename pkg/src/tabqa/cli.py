"""Command-line harness: run, eval, stats, render-prompt, record, replay.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from pathlib import Path
from typing import Optional

from . import datasets
from .config import ConfigError, load_manifest
from .datasets import DataError
from .evaluator import EvalResult, Gold, LengthMismatch, score_predictions, score_run
from .exemplars import ExemplarFormatError, load_exemplars
from .llm import (
    BackendUnavailable,
    ContextOverflow,
    RecordingBackend,
    ReplayBackend,
    ScriptExhausted,
)
from .pipeline import run_batch
from .prompting import AnswerType, CuatBlock, RenderConfig, build_step1_prompt, build_step2_prompt
from .sandbox import SandboxSpawnError
from .tables import EmptyTable, ParseError, load_table

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

_DATA_ERRORS = (
    DataError,
    ConfigError,
    ExemplarFormatError,
    LengthMismatch,
    ParseError,
    EmptyTable,
    FileNotFoundError,
)
_BACKEND_ERRORS = (BackendUnavailable, ScriptExhausted, ContextOverflow, SandboxSpawnError)


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tabqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_like(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("manifest", help="YAML run manifest")
        p.add_argument("--output", help="override the manifest's output directory")
        p.add_argument(
            "--fresh", action="store_true", help="ignore existing records instead of resuming"
        )
        return p

    add_run_like("run", "run a split with the manifest's backend")
    record = add_run_like("record", "run and record all backend traffic to a cassette")
    record.add_argument("--cassette", required=True, help="JSONL cassette to write")
    replay = add_run_like("replay", "run against a recorded cassette instead of the backend")
    replay.add_argument("--cassette", required=True, help="JSONL cassette to read")

    ev = sub.add_parser("eval", help="score a prediction file against a QA file")
    ev.add_argument("--predictions", required=True, help="one rendered answer per line")
    ev.add_argument("--golds", required=True, help="qa.csv with answer and type columns")
    ev.add_argument(
        "--ordered-lists", action="store_true", help="compare list answers in order"
    )
    ev.add_argument("--report", help="also write the JSON score report here")

    st = sub.add_parser("stats", help="dataset distribution tables for a split")
    st.add_argument("--dataset-root", required=True)
    st.add_argument("--split", required=True, choices=datasets.SPLITS)
    st.add_argument("--output", required=True, help="directory for the CSV tables")

    rp = sub.add_parser("render-prompt", help="print the exact prompt for one query")
    rp.add_argument("--dataset-root", required=True)
    rp.add_argument("--split", required=True, choices=datasets.SPLITS)
    rp.add_argument("--dataset-id", required=True)
    rp.add_argument("--question", required=True)
    rp.add_argument(
        "--cuat",
        help='JSON {"columns_used": [...], "column_types": [...], "answer_type": "..."} '
        "to render the step-two prompt",
    )
    rp.add_argument("--sample-rows", type=int, default=5)
    rp.add_argument("--exemplar-dir", help="override the bundled exemplars")
    return parser


def _write_lines(path: Path, lines: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


def _token_summary(records: list[dict]) -> dict:
    def mean(values: list[int]) -> float:
        return statistics.fmean(values) if values else 0.0

    fix_rounds = [r for r in records if r.get("fix_attempts")]
    return {
        "records": len(records),
        "generate_calls": sum(r.get("generate_calls", 0) for r in records),
        "main": {
            "avg_prompt_tokens": mean([r.get("main_prompt_tokens", 0) for r in records]),
            "avg_completion_tokens": mean([r.get("main_completion_tokens", 0) for r in records]),
        },
        "fix": {
            "avg_prompt_tokens": mean([r.get("fix_prompt_tokens", 0) for r in fix_rounds]),
            "avg_completion_tokens": mean([r.get("fix_completion_tokens", 0) for r in fix_rounds]),
            "records_with_fix_attempts": len(fix_rounds),
        },
    }


def _print_score(result: EvalResult) -> None:
    print(f"questions: {len(result.instance_scores)}")
    print(f"accuracy: {result.accuracy:.4f}")
    for answer_type, acc in result.per_type_accuracy.items():
        print(f"  {answer_type}: {acc:.4f}")
    print(f'"Error" predictions: {result.error_count}')
    if result.main_failure_count:
        print(
            f"errors fixed: {result.fixed_count}/{result.main_failure_count}"
            f" (correct after fix: {result.fixed_correct_count})"
        )


def cmd_run(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.output) if args.output else Path(manifest.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    backend = manifest.backend.build()
    if args.command == "record":
        backend = RecordingBackend(backend, args.cassette)
    elif args.command == "replay":
        backend = ReplayBackend(args.cassette)

    instances = datasets.load_instances(
        manifest.dataset_root,
        manifest.split,
        subtask=manifest.subtask,
        lite_dir=out_dir / "lite_tables" if manifest.subtask == "lite" else None,
    )
    records = run_batch(
        instances,
        manifest.pipeline,
        backend,
        parallelism=manifest.parallelism,
        record_path=out_dir / "records.jsonl",
        resume=not args.fresh,
    )
    _write_lines(out_dir / "predictions.txt", [r["final_answer"] for r in records])
    (out_dir / "token_summary.json").write_text(
        json.dumps(_token_summary(records), indent=2) + "\n", encoding="utf-8"
    )
    if all(i.gold_answer is not None and i.gold_type is not None for i in instances) and instances:
        golds = [Gold(i.gold_answer, i.gold_type) for i in instances]
        result = score_run(records, golds, manifest.ordered_lists)
        (out_dir / "score_report.json").write_text(
            json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        _print_score(result)
    print(f"wrote {len(records)} records to {out_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    with open(args.predictions, encoding="utf-8") as f:
        predictions = [line.rstrip("\n") for line in f]
    golds = datasets.golds_from_qa(datasets.load_qa_file(args.golds))
    result = score_predictions(predictions, golds, args.ordered_lists)
    _print_score(result)
    if args.report:
        Path(args.report).write_text(
            json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    stats = datasets.split_stats(args.dataset_root, args.split)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_lines(
        out_dir / "row_counts.csv",
        ["dataset,rows"] + [f"{k},{v}" for k, v in stats["row_counts"].items()],
    )
    _write_lines(
        out_dir / "column_counts.csv",
        ["dataset,columns"] + [f"{k},{v}" for k, v in stats["column_counts"].items()],
    )
    _write_lines(
        out_dir / "answer_types.csv",
        ["type,count"] + [f"{k},{v}" for k, v in stats["answer_types"].items()],
    )
    _write_lines(
        out_dir / "columns_used_types.csv",
        ["column_type,count"] + [f"{k},{v}" for k, v in stats["columns_used_types"].items()],
    )
    print(
        f"{stats['table_count']} tables, {stats['question_count']} questions; tables written to {out_dir}"
    )
    return EXIT_OK


def cmd_render_prompt(args: argparse.Namespace) -> int:
    table = load_table(
        datasets.table_path(args.dataset_root, args.split, args.dataset_id),
        name=args.dataset_id,
    )
    exemplars = load_exemplars(Path(args.exemplar_dir) if args.exemplar_dir else None)
    cfg = RenderConfig(
        sample_rows_n=args.sample_rows, exemplar_count_k=max(len(exemplars), 1)
    )
    if args.cuat:
        spec = json.loads(args.cuat)
        cuat = CuatBlock(
            spec["columns_used"], spec["column_types"], AnswerType(spec["answer_type"])
        )
        print(build_step2_prompt(exemplars, table, args.question, cuat, cfg))
    else:
        print(build_step1_prompt(exemplars, table, args.question, cfg))
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "record": cmd_run,
    "replay": cmd_run,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "render-prompt": cmd_render_prompt,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _DATA_ERRORS as exc:
        print(f"tabqa: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _BACKEND_ERRORS as exc:
        print(f"tabqa: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except json.JSONDecodeError as exc:
        print(f"tabqa: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
