"""Frontiers for a few definition groups on the synthetic data.

Trains the logistic baseline, sweeps each group in the model-agnostic and
model-specific settings, and prints delta at every epsilon decade next to
the baseline's own (epsilon, delta) position.

    python3 scripts/frontier_groups.py --variant B --n 20000 --seed 7
"""

import argparse
import json

from fact.data import SyntheticSpec, gen_synthetic, train_baseline
from fact.fairness import FairnessDef
from fact.frontier import EPSILON_LOG, SweepSpec, compare, model_point, sweep

GROUPS = {
    "DP": ["DP"],
    "EOd": ["EOd"],
    "EOd+DP": ["EOd", "DP"],
    "PE+EFNR": ["PE", "EFNR"],
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--variant", choices=("U", "B"), default="B")
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--json", help="write the comparison table here")
    args = p.parse_args()

    ds = gen_synthetic(SyntheticSpec(n=args.n, variant=args.variant, seed=args.seed))
    base = ds.tensor(train_baseline(ds, seed=args.seed).yhat)
    curves, markers = {}, []
    for name, tags in GROUPS.items():
        defs = [FairnessDef(t) for t in tags]
        for mode in ("MA", "MS"):
            spec = SweepSpec(EPSILON_LOG, 1e-7, 1e-1, args.points, mode=mode, base=base if mode == "MS" else None)
            curves[f"{name} {mode}"] = sweep(base.marginals, defs, spec)
        markers.append(model_point(f"baseline vs {name}", base, defs))

    table = compare(curves, markers=markers)
    header = "group".ljust(14) + "".join(f"{a:>10.0e}" for a in table.anchors)
    print(header)
    for label, row in table.table.items():
        print(label.ljust(14) + "".join(" " * 10 if d is None else f"{d:>10.4f}" for d in row))
    print("blank: anchor above the largest epsilon the sweep reached (the group may be met exactly)")
    print()
    for mk in markers:
        print(f"{mk.label:<22} epsilon={mk.epsilon:.3e} error={mk.error_rate:.4f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(table.to_dict(), fh, indent=2)


if __name__ == "__main__":
    main()
