"""Analytic upper bound on the expected DKW/Simes bound ratio against effect size.

Defaults to m = 1e7, s = m^(2/3), K = m/s, r = 0.6, alpha = 0.1.

    python3 scripts/ratio_curve.py > ratio.csv
"""

import argparse

from posthoc.simulation import RatioCurveInput, mu_grid, ratio_curve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=float, default=1e7)
    ap.add_argument("--r", type=float, nargs="+", default=[0.6])
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--step", type=float, default=0.1)
    args = ap.parse_args()

    s = args.m ** (2 / 3)
    grid = mu_grid(0.0, 6.0, args.step)
    print("r,mu,ratio")
    for r in args.r:
        inp = RatioCurveInput(m=args.m, s=s, K=args.m / s, r=r, alpha=args.alpha, mu_grid=grid)
        for mu, value in ratio_curve(inp):
            print(f"{r:g},{mu:g},{value:.6f}")


if __name__ == "__main__":
    main()
