#!/usr/bin/env python3
"""Reproduce all four worked examples end to end.

Runs the envelope (and, where a reduced-system constraint exists, the
falsifier) for each registry entry and prints the verdicts.  Desk-scale trial
counts by default; pass --full for the acceptance-scale runs.
"""

import argparse
import sys

from swstab.cli import main as cli_main

EXAMPLES = ["motivating", "inverter", "example1", "example4"]


def run(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="reproduction")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--full", action="store_true",
                    help="acceptance-scale trial counts (slower)")
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args(argv)

    failures = []
    for name in EXAMPLES:
        print(f"=== {name} ===")
        cmd = ["reproduce", name, "--out", f"{args.out}/{name}",
               "--seed", str(args.seed), "--workers", str(args.workers)]
        if not args.full:
            cmd += ["--trials", "40"]
        rc = cli_main(cmd)
        if rc != 0:
            failures.append(name)
    if failures:
        print(f"FAILED: {failures}")
        return 1
    print("all examples reproduced")
    return 0


if __name__ == "__main__":
    sys.exit(run())
