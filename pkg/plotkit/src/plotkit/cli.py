"""Command line entry point: ``plotkit render --spec <file> --out <dir>``.

Exit 0 on success (including the empty-input placeholder), 1 on bad
usage or a malformed spec, 2 when the data does not match the results
schema.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import render
from .spec import load_spec
from .tables import SchemaError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="plotkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    p = sub.add_parser("render", help="draw the figure a spec file describes")
    p.add_argument("--spec", required=True, help="figure-spec JSON file")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"plotkit: error: {e}", file=sys.stderr)
        return 1

    spec_path = Path(args.spec)
    if not spec_path.exists():
        print(f"plotkit: error: spec file not found: {spec_path}", file=sys.stderr)
        return 1
    try:
        spec = load_spec(spec_path)
    except ValueError as e:
        print(f"plotkit: error: {e}", file=sys.stderr)
        return 1

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        written = render(spec, base_dir=spec_path.parent, out_dir=out_dir)
    except SchemaError as e:
        print(f"plotkit: schema mismatch: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"plotkit: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"plotkit: runtime failure: {e}", file=sys.stderr)
        return 2
    print(f"wrote {written}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
