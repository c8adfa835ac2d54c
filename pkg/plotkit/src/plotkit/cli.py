"""plotkit command line: `plotkit plot --kind <...> --in <csv...> --out <img>`."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .figures import FIGURE_KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plotkit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("plot", help="render one figure kind from exported CSVs")
    p.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    p.add_argument("--in", dest="inputs", nargs="+", required=True, help="input CSV file(s)")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--smooth", type=int, default=10, help="moving-average window (episodes)")
    p.add_argument("--slot", type=int, help="slot to show for the phase heatmap")
    p.add_argument("--uav", type=int, help="restrict track/antenna figures to one UAV")
    p.add_argument("--labels", nargs="+", help="legend labels for multi-input CDFs")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        kind=args.kind,
        inputs=args.inputs,
        output=args.out,
        smoothing=args.smooth,
        slot=args.slot,
        uav=args.uav,
        labels=args.labels or [],
    )
    try:
        path = render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
