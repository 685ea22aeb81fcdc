"""Command line entry point: render one figure from a plot spec file."""

from __future__ import annotations

import argparse
import sys

from .render import render
from .spec import SpecError, load_spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="snapplot",
        description="Render a figure from experiment CSV files as described "
                    "by a JSON plot spec.",
    )
    parser.add_argument("--spec", required=True, help="path to the plot spec JSON")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        spec = load_spec(args.spec)
        output = render(spec)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected: report, fail nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(output)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
