#!/usr/bin/env python3
"""Emit the survival and local-probability expansion curves for both presets.

Writes one CSV per (parameter set, normalizer shape) into --out, matching the
`criticalbranch figure-data` subcommand defaults.
"""

import argparse

from criticalbranch import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="output directory")
    args = parser.parse_args()
    return cli.main(["figure-data", "--out", args.out])


if __name__ == "__main__":
    raise SystemExit(main())
