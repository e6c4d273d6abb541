"""Script interface: plot <kind> --trace PATH [--trace PATH2] --out PATH.png
[--cutoff 10] [--vel-max 1.8]."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, FigureSpec, PlotError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render figures from simulation trace CSVs.",
    )
    parser.add_argument("kind", choices=FIGURE_KINDS, help="figure kind")
    parser.add_argument("--trace", action="append", required=True,
                        help="trace CSV (repeat to overlay on rms_time)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--cutoff", type=float, default=10.0,
                        help="transient cutoff marker [s]")
    parser.add_argument("--vel-max", type=float, default=1.8,
                        help="saturation guide level for control_time [m/s]")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, traces=args.trace, out=args.out,
                          cutoff=args.cutoff, vel_max=args.vel_max)
        info = render(spec)
    except PlotError as err:
        print(f"error: plot: {err}", file=sys.stderr)
        return 1
    print(info["out"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
