"""Command-line front end.

    viz mesh <snapshot.json> -o out.png
    viz conv <run.csv> [more.csv ...] [--kind ...] -o out.png

Exit codes: 0 success, 2 missing input or schema mismatch, 3 empty input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .plots import KINDS, EmptyInputError, SchemaError, plot_convergence, plot_mesh


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="viz", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    mesh_cmd = sub.add_parser("mesh", help="render a mesh+degree snapshot")
    mesh_cmd.add_argument("snapshot")
    mesh_cmd.add_argument("-o", "--output", required=True)

    conv_cmd = sub.add_parser("conv", help="render convergence curves")
    conv_cmd.add_argument("csv", nargs="+")
    conv_cmd.add_argument("--kind", default="convergence-p",
                          choices=[k for k in KINDS if k != "mesh-degrees"])
    conv_cmd.add_argument("-o", "--output", required=True)

    args = parser.parse_args(argv)
    inputs = [args.snapshot] if args.command == "mesh" else args.csv
    for path in inputs:
        if not Path(path).is_file():
            print(f"viz: no such file: {path}", file=sys.stderr)
            return 2
    try:
        if args.command == "mesh":
            figure = plot_mesh(args.snapshot)
        else:
            figure = plot_convergence(args.csv, kind=args.kind)
        figure.savefig(args.output, dpi=150, bbox_inches="tight")
    except SchemaError as exc:
        print(f"viz: schema error: {exc}", file=sys.stderr)
        return 2
    except EmptyInputError as exc:
        print(f"viz: empty input: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
