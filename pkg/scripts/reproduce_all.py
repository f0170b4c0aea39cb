#!/usr/bin/env python3
"""Run every named reproduction end to end and print one line per entry.

Usage: python scripts/reproduce_all.py [--seed N] [--skip-slow]
"""

import argparse
import sys
import time

from qlstab.cli import REPRODUCTIONS

SLOW = {"kagome-depth12", "graph-rapid-mixing", "w-product-robust", "aklt-not-fts"}


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skip-slow", action="store_true")
    args = ap.parse_args()
    failures = []
    for name in sorted(REPRODUCTIONS):
        if args.skip_slow and name in SLOW:
            print(f"[SKIP] {name}")
            continue
        t0 = time.time()
        ok, cert = REPRODUCTIONS[name](args.seed)
        print(f"[{'PASS' if ok else 'FAIL'}] {name} ({time.time() - t0:.1f}s)")
        for key, value in cert.items():
            print(f"         {key}: {value}")
        if not ok:
            failures.append(name)
    if failures:
        print("failed:", ", ".join(failures))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
