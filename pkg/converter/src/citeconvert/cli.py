"""Command-line interface: ``citeconvert convert --raw DIR --name NAME --out DIR``.

Exit codes: 0 success, 1 validation error (missing/inconsistent input,
shape mismatch), 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .convert import TABLE1, ConversionError, convert
from .legacy import RawBenchmarkError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="citeconvert",
                     description="legacy citation benchmark converter")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)
    p = sub.add_parser("convert", help="convert one benchmark")
    p.add_argument("--raw", required=True, help="directory with ind.* shards")
    p.add_argument("--name", required=True, choices=sorted(TABLE1))
    p.add_argument("--out", required=True, help="canonical output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = convert(args.raw, args.name, args.out)
    except (RawBenchmarkError, ConversionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    print(f"converted {summary.name}: n={summary.num_nodes} "
          f"edges={summary.num_edges} classes={summary.num_classes} "
          f"features={summary.num_features}")
    if summary.self_loops_dropped:
        print(f"warning: dropped {summary.self_loops_dropped} self-loop entries",
              file=sys.stderr)
    if summary.duplicate_edges_merged:
        print(f"warning: merged {summary.duplicate_edges_merged} duplicate "
              "adjacency entries", file=sys.stderr)
    if summary.isolated_filled:
        print(f"warning: filled {summary.isolated_filled} isolated test nodes "
              "with zero rows", file=sys.stderr)
    for warning in summary.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
