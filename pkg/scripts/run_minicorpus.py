"""Run the bundled mini-corpus end to end and print the score report.

Drives the CLI exactly as a fresh checkout would: scripted backend, sandbox
execution, relaxed-accuracy scoring.  Expects accuracy 1.0 since the script
file contains hand-verified oracle programs.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from tabqa.cli import main as tabqa_main

ROOT = Path(__file__).resolve().parent.parent
MANIFEST = ROOT / "data" / "minicorpus" / "manifest.yaml"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--output", default=str(ROOT / "out" / "minicorpus"), help="run artifact directory"
    )
    parser.add_argument(
        "--fresh", action="store_true", help="ignore existing records instead of resuming"
    )
    args = parser.parse_args()
    argv = ["run", str(MANIFEST), "--output", args.output]
    if args.fresh:
        argv.append("--fresh")
    return tabqa_main(argv)


if __name__ == "__main__":
    sys.exit(main())
