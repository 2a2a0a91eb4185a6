"""Command-line entry point: render figures from JSON descriptions."""

from __future__ import annotations

import argparse
import sys

from .render import PlotError, load_spec, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="nonadiab-plot",
        description="Render series/snapshot/scan figures from nonadiab CSV outputs",
    )
    parser.add_argument("specs", nargs="+", metavar="spec.json", help="figure description files")
    args = parser.parse_args(argv)
    for path in args.specs:
        try:
            output = render(load_spec(path))
        except PlotError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"wrote {output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
