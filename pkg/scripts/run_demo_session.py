#!/usr/bin/env python3
"""Run the fully scripted demo session end to end, hermetically.

Drives the same pipeline as `vqalab run`: scripted orchestrator, mock
generator, oracle and seeded-random mock models. Writes report.json,
conclusions.txt, and metrics.csv under --out (default ./out/demo).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from vqalab.cli import main as cli_main  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/demo")
    parser.add_argument("--seed", type=int, default=17)
    parser.add_argument(
        "--query", default="Can models identify low-contrast images?"
    )
    args = parser.parse_args()
    return cli_main(
        [
            "run",
            "--query",
            args.query,
            "--config",
            str(REPO / "tests" / "data" / "config_mock.toml"),
            "--scripted",
            str(REPO / "tests" / "data" / "scripts" / "session_low_contrast.yaml"),
            "--mock-all",
            "--seed",
            str(args.seed),
            "--out",
            args.out,
            "--force",
        ]
    )


if __name__ == "__main__":
    raise SystemExit(main())
