#!/usr/bin/env python3
"""Contraction-coefficient scan for line-graph-state chains.

Samples eta(t) for the commuting witness Liouvillians L_k = E_k - I on chains
of increasing length and prints the rapid-mixing fit.

Usage: python scripts/mixing_scan.py [--sizes 3 4 5 6] [--ts 1.5 2.5 4 6]
"""

import argparse

import numpy as np

from qlstab import states
from qlstab.mixing import CommutingResetFamily, rapid_mixing_check


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="*", default=[3, 4, 5, 6])
    ap.add_argument("--ts", type=float, nargs="*", default=[1.5, 2.5, 4.0, 6.0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    fams = []
    for n in args.sizes:
        inst = states.line_graph_state(n)
        fams.append(
            CommutingResetFamily(list(inst.witness_channels), inst.space, inst.psi)
        )
    rep = rapid_mixing_check(fams, ts=args.ts, seed=args.seed)
    print("N      t      eta_lower    eta_upper")
    for n, t, lo, hi in rep.samples:
        print(f"{n:<6d} {t:<6.2f} {lo:<12.4e} {hi:<12.4e}")
    print(f"\nper-channel gap nu = {rep.nu:.6f}")
    print(f"fit: eta ~ {np.exp(rep.log_c):.3f} * N^{rep.delta:.3f} * exp(-{rep.gamma:.3f} t)")
    print(f"rapid-mixing criteria (gamma >= nu - 0.05, delta <= 1.1): "
          f"{'satisfied' if rep.passed else 'violated'}")


if __name__ == "__main__":
    main()
