"""Accuracy along one-weight slices of the multi-weight problem.

For DP, EOd and PCB on the biased synthetic data, sweeps one weight over
1e-4..1e4 while the other two sit at a fixed level, and prints the
accuracy range of each slice.

    python3 scripts/mlafop_slices.py --seed 7
"""

import argparse
import math

import numpy as np

from fact.data import SyntheticSpec, gen_synthetic, train_baseline
from fact.fairness import FairnessDef
from fact.lafop import solve_mlafop

LEVELS = (1e-2, 1.0, 1e2, 1e4, math.inf)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--points", type=int, default=17)
    args = p.parse_args()

    ds = gen_synthetic(SyntheticSpec(n=args.n, variant="B", seed=args.seed))
    base = ds.tensor(train_baseline(ds, seed=args.seed).yhat)
    c = base.counts
    v1 = (c[0] + c[4]) / (c[0] + c[2] + c[4] + c[6])
    v0 = (c[1] + c[5]) / (c[1] + c[3] + c[5] + c[7])
    defs = [FairnessDef("DP"), FairnessDef("EOd"), FairnessDef.make("PCB", v0=float(v0), v1=float(v1))]
    names = [str(d) for d in defs]
    sweep_vals = np.logspace(-4, 4, args.points)
    m = base.marginals

    print(f"PCB scores from the baseline: v0={v0:.4f} v1={v1:.4f}")
    print(f"{'swept':<10}{'fixed level':>12}{'acc min':>10}{'acc max':>10}{'change':>10}")
    for k, name in enumerate(names):
        for lv in LEVELS:
            accs = []
            for w in sweep_vals:
                lams = [lv] * len(defs)
                lams[k] = w
                accs.append(1 - solve_mlafop(m, defs, lams).error_rate)
            print(f"{name[:10]:<10}{lv:>12g}{min(accs):>10.4f}{max(accs):>10.4f}{max(accs) - min(accs):>10.2e}")


if __name__ == "__main__":
    main()
