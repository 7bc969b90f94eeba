#!/usr/bin/env python3
"""Run the whole synthetic protocol through the CLI and print the report.

    python3 scripts/run_full_protocol.py --out runs/full
    python3 scripts/run_full_protocol.py --out runs/quick --quick

The full run trains 2 architectures x 2 sources x 2 tasks with 15 folds
each, plus the three weight subsets per cell; expect a few hours on one
core. ``--quick`` shrinks the cohort and caps training epochs.
"""

import argparse
import sys
import time

from carefulkin.cli import main as cli

ARCHS = ("cnn-lstm-dnn", "masked-lstm-dnn")
SOURCES = ("mocap", "flow")
SUBSETS = ("scale-to-shelf", "low-care", "high-care")


def step(*argv):
    start = time.perf_counter()
    code = cli(list(argv))
    print(f"[{time.perf_counter() - start:7.1f} s] carefulkin {' '.join(argv)}", file=sys.stderr)
    if code:
        sys.exit(code)


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="runs/full")
    p.add_argument("--seed", default="0")
    p.add_argument("--config", help="optional JSON config passed to every step")
    p.add_argument("--quick", action="store_true", help="4 subjects x 32 trials, at most 5 epochs")
    p.add_argument("--no-subsets", action="store_true", help="skip the weight subset analyses")
    args = p.parse_args()

    common = ["--out", args.out, "--seed", args.seed]
    if args.config:
        common += ["--config", args.config]
    train_extra = ["--max-epochs", "5"] if args.quick else []
    cohort = ["--subjects", "4", "--trials", "32"] if args.quick else []

    step("synth", *common, *cohort)
    for source in SOURCES:
        step("preprocess", *common, "--source", source)
    for arch in ARCHS:
        for source in SOURCES:
            cell = [*common, "--arch", arch, "--source", source, *train_extra]
            step("train-eval", *cell, "--task", "carefulness")
            step("train-eval", *cell, "--task", "weight")
            if not args.no_subsets:
                for subset in SUBSETS:
                    step("train-eval", *cell, "--task", "weight", "--subset", subset)
    step("report", *common)


if __name__ == "__main__":
    main()
