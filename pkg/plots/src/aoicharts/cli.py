"""Standalone chart command: CSV in, SVG (or PDF/PNG) out."""

from __future__ import annotations

import argparse
import sys

from .render import CHART_KINDS, ChartError, ChartSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="aoicharts", description=__doc__)
    parser.add_argument("csv", help="sweep CSV from the experiment harness")
    parser.add_argument("--kind", choices=CHART_KINDS, required=True)
    parser.add_argument("--out", required=True,
                        help="output image path (.svg default; .pdf/.png "
                             "by extension)")
    parser.add_argument("--linear-x", action="store_true",
                        help="force a linear x axis on vs-k charts")
    args = parser.parse_args(argv)
    spec = ChartSpec(csv_path=args.csv, kind=args.kind, out_path=args.out,
                     log_x=False if args.linear_x else None)
    try:
        result = render(spec)
    except ChartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.out_path} ({result.n_series} series, "
          f"{result.n_rows} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
