"""Capacity of loop-erased walk prefixes and the ρ_n trend at d = 4."""

import argparse
import math

import numpy as np

from ustlab.capacity import lerw_prefix_capacity, lerw_rho
from ustlab.lattice import RngSeed


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--ns", type=int, nargs="+", default=[256, 1024, 4096])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--rho-walks", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    seed = RngSeed(args.seed)
    print("n  Cap(LE^n) (log n)^(2/3) / n: q10 median q90 | median rho_n / (n (log n)^(-1/3))")
    for n in args.ns:
        c = lerw_prefix_capacity(n, args.trials, seed.child(0, n))
        rho = [lerw_rho(n, seed.child(1, n, k)) / (n * math.log(n) ** (-1 / 3)) for k in range(args.rho_walks)]
        print(f"{n:>7}  {c['q10']:.3f} {c['median']:.3f} {c['q90']:.3f} | {np.median(rho):.3f}")


if __name__ == "__main__":
    main()
