#!/usr/bin/env python3
"""Optimizer sweep over the six reference configurations.

Requires babbling data, recorded trajectories, and trained forward/inverse
models in the output directory (run scripts/run_pipeline.py first, or the
babble/record/train-fm/train-im stages). Produces sweep.csv with per-trial
final losses and sweep_summary.csv comparing corpus metrics against the
published reference values.

Usage: python3 scripts/run_sweep.py [--config CONFIG] [--seed N] [--out DIR]
"""

import argparse
import sys

from trajplan.cli import main


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override seed")
    parser.add_argument("--out", default=None, help="override output directory")
    args = parser.parse_args(argv)
    passthrough = []
    if args.config:
        passthrough += ["--config", args.config]
    if args.seed is not None:
        passthrough += ["--seed", str(args.seed)]
    if args.out:
        passthrough += ["--out", args.out]
    return main(["sweep", *passthrough])


if __name__ == "__main__":
    sys.exit(run())
