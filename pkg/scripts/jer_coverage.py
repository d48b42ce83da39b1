"""Monte Carlo estimate of the joint error rate of DKW-calibrated partitions.

    python3 scripts/jer_coverage.py --m 1000 --s 100 --alpha 0.2 --reps 2000
"""

import argparse
import math

from posthoc.simulation import SimulationConfig, build_partition_regions, jer_empirical


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=1000)
    ap.add_argument("--s", type=int, default=100)
    ap.add_argument("--alpha", type=float, nargs="+", default=[0.05, 0.1, 0.2])
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    regions = build_partition_regions(args.m, args.s)
    print("alpha,reps,rate,two_se_limit")
    for alpha in args.alpha:
        cfg = SimulationConfig(m=args.m, s=args.s, q=None, K1=0, alpha=alpha, reps=args.reps, seed=args.seed)
        rate = jer_empirical(cfg, regions)
        limit = alpha + 2 * math.sqrt(alpha * (1 - alpha) / args.reps)
        print(f"{alpha:g},{args.reps},{rate:.4f},{limit:.4f}")


if __name__ == "__main__":
    main()
