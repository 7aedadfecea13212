#!/usr/bin/env python3
"""Run the full pipeline end to end with the default configuration:

babbling data -> forward/inverse models -> recorded trajectories ->
trajectory model -> predictions -> quality metrics -> latency benchmark.

Usage: python3 scripts/run_pipeline.py [--config CONFIG] [--seed N] [--out DIR]
"""

import argparse
import sys

from trajplan.cli import main

STAGES = [
    "babble",
    "record",
    "train-fm",
    "train-im",
    "train-tm",
    "infer",
    "eval",
    "bench",
]


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
    for stage in STAGES:
        print(f"==> {stage}")
        code = main([stage, *passthrough])
        if code != 0:
            print(f"stage {stage!r} failed with exit code {code}", file=sys.stderr)
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run())
