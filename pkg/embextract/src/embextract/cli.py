"""Command line: `embextract run --job manifest.json`.

Exit codes: 0 all records written, 2 bad manifest/model/arguments,
3 file written but some records failed.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ExtractError
from .extract import DEFAULT_BATCH_SIZE, extract
from .job import load_job


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embextract",
        description="Encode images and texts into an embedding file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute one job manifest")
    run.add_argument("--job", required=True, help="path to the job manifest JSON")
    run.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE)
    run.add_argument("--device", default="cpu", help="device hint for torch backends")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        job = load_job(args.job)
        summary = extract(job, batch_size=args.batch_size, device=args.device)
    except (ExtractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for input_id, message in summary.errors:
        print(f"error: {input_id}: {message}", file=sys.stderr)
    print(f"wrote {summary.written} records to {summary.output_path}"
          f" ({summary.failed} failed)")
    return 3 if summary.failed else 0


def entrypoint():
    raise SystemExit(main())
