"""Repair a baseline classifier to equalized odds by randomized mixing.

Prints the base and target group rates, the mixing probabilities and the
rates realized by one seeded draw.

    python3 scripts/postprocess_demo.py --n 100000 --seed 7
"""

import argparse
import math

from fact.data import SyntheticSpec, gen_synthetic, train_baseline
from fact.lafop import solve_ms_lafop
from fact.postprocess import apply_mixing, mixing_rates
from fact.tensor import error_rate, group_rates, tally


def show(label, z):
    r = group_rates(z)
    print(
        f"{label:<10} TPR1={r[1].tpr:.4f} FPR1={r[1].fpr:.4f} TPR0={r[0].tpr:.4f} FPR0={r[0].fpr:.4f} "
        f"error={error_rate(z):.4f}"
    )


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--variant", choices=("U", "B"), default="B")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args()

    ds = gen_synthetic(SyntheticSpec(n=args.n, variant=args.variant, seed=args.seed))
    yhat = train_baseline(ds, seed=args.seed).yhat
    base = ds.tensor(yhat)
    target = solve_ms_lafop(base, lam=math.inf).z_star
    rates = mixing_rates(base, target)
    post = apply_mixing(yhat, ds.a, rates, seed=args.seed, ids=ds.ids)

    show("base", base.z)
    show("target", target)
    show("realized", tally(ds.y, post, ds.a).z)
    print(f"mixing: {rates}")


if __name__ == "__main__":
    main()
