"""T̃(γ)/n for straight lines and loop-erased walks, with the δ-good check."""

import argparse

from ustlab.lattice import RngSeed, sample_srw
from ustlab.paths import Path, erase_loops
from ustlab.typical_time import is_delta_good, straight_line, t_tilde


def lerw(n: int, seed: RngSeed) -> Path:
    e = erase_loops(sample_srw([0, 0, 0, 0], 8 * n, seed)).erased
    return Path(e.points[: n + 1]) if e.length >= n else e


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--ns", type=int, nargs="+", default=[32, 64, 128, 256, 512])
    p.add_argument("--trials", type=int, default=400)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", help="write the escape profile of the largest LERW path to this CSV")
    args = p.parse_args()
    seed = RngSeed(args.seed)
    print("n  straight T/n  lerw T/n  lerw delta-good")
    prof = None
    for n in args.ns:
        ts, _ = t_tilde(straight_line(n), args.trials, seed.child(0, n))
        g = lerw(n, seed.child(1, n))
        tl, prof = t_tilde(g, args.trials, seed.child(2, n))
        print(f"{n:>5}  {ts / n:10.3f}  {tl / g.length:8.3f}  {is_delta_good(prof, args.delta)}")
    if args.profile and prof is not None:
        prof.to_csv(args.profile)


if __name__ == "__main__":
    main()
