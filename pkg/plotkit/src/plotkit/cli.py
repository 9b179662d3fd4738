"""Standalone entry point: render one figure from a plot-spec file."""

import argparse
import sys

from .plots import PlotError, PlotSpec, render


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plotkit", description="Render experiment CSVs into figures"
    )
    parser.add_argument("--spec", required=True, help="path to a JSON or TOML plot spec")
    args = parser.parse_args(argv)
    try:
        spec = PlotSpec.from_file(args.spec)
        out = render(spec)
    except (PlotError, FileNotFoundError, KeyError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
