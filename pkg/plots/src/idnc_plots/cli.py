"""Command-line entry: pick a figure preset, point it at sweep CSVs."""

from __future__ import annotations

import argparse
import sys

from .figures import (
    PRESETS,
    EmptySelectionError,
    FigureSpec,
    MissingColumnError,
    render_figure,
)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="idnc-plots",
        description="Render policy-comparison figures from sweep CSVs.",
    )
    ap.add_argument(
        "--input",
        nargs="+",
        required=True,
        help="one or more sweep summary CSVs",
    )
    ap.add_argument(
        "--preset",
        choices=sorted(PRESETS),
        required=True,
        help="which standard figure to draw",
    )
    ap.add_argument(
        "--out",
        help="output image path (.svg default, .png supported); "
        "defaults to <preset>.svg",
    )
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    spec = FigureSpec(
        inputs=tuple(args.input),
        out=args.out or f"{args.preset}.svg",
        **PRESETS[args.preset],
    )
    try:
        out = render_figure(spec)
    except (MissingColumnError, EmptySelectionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
