"""Command-line entry points: plot-power and plot-null."""

import argparse

from .figures import FigureSpec, plot_null, plot_power


def plot_power_cmd(argv=None):
    parser = argparse.ArgumentParser(
        description="Render a multi-panel power figure from a study results CSV."
    )
    parser.add_argument("input_csv")
    parser.add_argument("--out", required=True, help="output image (.png or .svg)")
    parser.add_argument("--columns", type=int, default=2)
    parser.add_argument("--dpi", type=int, default=150)
    args = parser.parse_args(argv)
    spec = FigureSpec(
        input_csv=args.input_csv,
        output_path=args.out,
        max_columns=args.columns,
        dpi=args.dpi,
    )
    path = plot_power(args.input_csv, spec)
    print(f"wrote {path}")


def plot_null_cmd(argv=None):
    parser = argparse.ArgumentParser(
        description="Render a null-pmf bar chart from a q,prob CSV."
    )
    parser.add_argument("input_csv")
    parser.add_argument("--out", required=True, help="output image (.png or .svg)")
    parser.add_argument("--dpi", type=int, default=150)
    args = parser.parse_args(argv)
    spec = FigureSpec(input_csv=args.input_csv, output_path=args.out, dpi=args.dpi)
    path = plot_null(args.input_csv, spec)
    print(f"wrote {path}")
