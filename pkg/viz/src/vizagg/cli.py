"""Command line front end: render one figure from one harness table.

Exit codes: 0 on success, 2 on missing input or schema mismatch.
"""

import argparse
import sys

from .figures import KINDS, FigureSpec, MissingInput, SchemaMismatch, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vizagg",
        description="Static figures from coagg harness output tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("render")
    sp.add_argument("--kind", required=True, choices=KINDS)
    sp.add_argument("--in", dest="input_path", required=True, help="harness csv/jsonl")
    sp.add_argument("--out", dest="output_path", required=True, help="png or svg")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(args.input_path, args.kind, args.output_path)
    try:
        labels = render(spec)
    except (MissingInput, SchemaMismatch) as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 2
    print(f"{spec.kind}: {len(labels)} series -> {spec.output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
