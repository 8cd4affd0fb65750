"""plots <figure-kind> --in results.csv --out figure.png"""

import argparse
import sys

from .render import FIGURE_KINDS, FigureSpec, PlotError, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plots", description="Render figures from btbsim result CSVs"
    )
    parser.add_argument("kind", choices=sorted(FIGURE_KINDS))
    parser.add_argument("--in", dest="csv_in", required=True,
                        help="input CSV from the simulator harness")
    parser.add_argument("--out", dest="image_out", required=True,
                        help="output PNG path")
    parser.add_argument("--xlabel", default="")
    parser.add_argument("--ylabel", default="")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        kind=args.kind, csv_in=args.csv_in, image_out=args.image_out,
        xlabel=args.xlabel, ylabel=args.ylabel,
    )
    try:
        series = render(spec)
    except (PlotError, OSError) as err:
        print(f"plots: {err}", file=sys.stderr)
        return 1
    n = sum(len(v) for v in series.values())
    print(f"{args.image_out}: {len(series)} series, {n} values", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
