"""Command-line entry point.

Exit codes: 0 success, 1 unreadable or malformed input, 2 a precondition or
domain failure (non-forest where a forest is needed, level too large, bad
simulation settings, ...).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds
from .calibration import HybridBound, SimesBound, as_pvalues, calibrate
from .errors import InputError, NotAForest, PosthocError, ProblemTooLarge
from .family import (
    ReferenceFamily,
    build_index,
    dump_family,
    load_family,
    validate_forest,
)
from .simulation import (
    BOUND_COLUMNS,
    RatioCurveInput,
    SimulationConfig,
    envelope,
    mu_grid,
    ratio_curve,
    run_simulation,
    topk_order,
    workers_from_env,
)

FLOAT_FMT = ".17g"


def fmt(x: float) -> str:
    return format(float(x), FLOAT_FMT)


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [ln.strip() for ln in fh if ln.strip()]
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def read_pvalues(path) -> np.ndarray:
    """One p-value per line; line number is the 1-based hypothesis index."""
    try:
        values = [float(ln) for ln in _read_lines(path)]
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not values:
        raise InputError(f"{path}: no p-values")
    return as_pvalues(values)


def read_selection(path) -> list[int]:
    out = []
    for ln in _read_lines(path):
        try:
            out.append(int(ln))
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from exc
    return out


def _emit_csv(header: list[str], rows) -> None:
    out = [",".join(header)]
    out.extend(",".join(row) for row in rows)
    sys.stdout.write("\n".join(out) + "\n")


# --- subcommands ------------------------------------------------------------------


def cmd_validate(args) -> int:
    family = load_family(args.family)
    report = validate_forest(family)
    if not report.is_forest:
        a, b = report.witness
        print(json.dumps({"is_forest": False, "witness": [a + 1, b + 1]}))
        return 2
    index = build_index(family)
    print(json.dumps({
        "is_forest": True,
        "m": family.m,
        "members": family.K,
        "atoms": index.n_atoms,
        "max_depth": index.max_depth,
        "d": index.leaf_count,
        "depths": list(index.depth_of),
    }))
    return 0


_METHODS = {
    "star": lambda fam, S: bounds.v_star_forest(fam, S),
    "tilde": lambda fam, S: bounds.v_tilde(fam, S),
    "bar": bounds.v_bar,
    "brute": bounds.v_star_bruteforce,
}


def cmd_bound(args) -> int:
    family = load_family(args.family)
    family.require_zetas()
    if args.method == "star":
        report = validate_forest(family)
        if not report.is_forest:
            raise NotAForest(report.witness)
    if args.method == "brute" and family.m > bounds.BRUTEFORCE_MAX_M:
        raise ProblemTooLarge(f"brute force refuses m={family.m} > {bounds.BRUTEFORCE_MAX_M}")
    evaluate = _METHODS[args.method]

    if args.all_topk is not None:
        p = _pvalues_for(family, args.all_topk)
        order = topk_order(p)
        if args.method == "star":
            values = bounds.ForestBound(family).topk(order)
        else:
            values = [evaluate(family, order[:k] + 1) for k in range(1, p.size + 1)]
        _emit_csv(["k", "bound"], ([str(k), str(int(v))] for k, v in enumerate(values, 1)))
        return 0

    if args.selection is not None:
        S = read_selection(args.selection)
    elif args.topk is not None:
        if args.pvalues is None:
            raise InputError("--topk needs --pvalues")
        p = _pvalues_for(family, args.pvalues)
        if not 0 <= args.topk <= p.size:
            raise InputError(f"--topk must lie in 0..{p.size}")
        S = topk_order(p)[: args.topk] + 1
    else:
        raise InputError("give --selection, --topk with --pvalues, or --all-topk")
    print(evaluate(family, S))
    return 0


def _pvalues_for(family: ReferenceFamily, path) -> np.ndarray:
    p = read_pvalues(path)
    if p.size != family.m:
        raise InputError(f"{path}: {p.size} p-values for a family over m={family.m}")
    return p


def cmd_calibrate(args) -> int:
    regions = load_family(args.regions)
    p = read_pvalues(args.pvalues)
    if regions.m != p.size:
        raise InputError(f"family has m={regions.m} but {p.size} p-values were given")
    if not regions.K:
        raise InputError("the region list is empty")
    print(dump_family(calibrate(regions, p, args.alpha, args.method)))
    return 0


def cmd_envelope(args) -> int:
    p = read_pvalues(args.pvalues)
    columns = {"simes": envelope(p, SimesBound(p, args.alpha))}
    if args.regions is not None:
        regions = load_family(args.regions)
        if regions.m != p.size:
            raise InputError(f"family has m={regions.m} but {p.size} p-values were given")
        report = validate_forest(regions)
        if not report.is_forest:
            raise NotAForest(report.witness)
        tree = calibrate(regions, p, args.alpha, args.method)
        columns["tree"] = envelope(p, bounds.ForestBound(tree))
        if args.gamma is not None:
            columns["hybrid"] = envelope(p, HybridBound.build(p, regions, args.alpha, args.gamma, args.method))
    names = [c for c in BOUND_COLUMNS if c in columns]
    k = np.arange(1, p.size + 1)
    tds = [k - columns[c].values for c in names]
    _emit_csv(["k"] + names, ([str(i)] + [str(int(td[i - 1])) for td in tds] for i in k))
    return 0


def cmd_simulate(args) -> int:
    config = SimulationConfig(
        m=args.m, s=args.s, q=args.q, K1=args.K1, r=args.r, mu=args.mu, alpha=args.alpha,
        gamma=args.gamma, seed=args.seed, reps=args.reps, scatter=args.scatter,
    )
    workers = workers_from_env()
    result = run_simulation(config, workers)
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_simulation(result, out)
    except OSError as exc:
        raise InputError(f"cannot write to {out}: {exc}") from exc
    print(json.dumps({
        "K_part": result.K_part,
        "K_tree": result.K_tree,
        "reps": config.reps,
        "violations": result.violations,
    }))
    return 0


def write_simulation(result, out: Path) -> None:
    m = result.config.m
    k = np.arange(1, m + 1)
    header = "k," + ",".join(BOUND_COLUMNS)
    width = max(4, len(str(len(result.replicates) - 1)))
    for rep in result.replicates:
        cols = [k] + [k - rep.envelopes[c] for c in BOUND_COLUMNS]
        lines = [header] + [",".join(str(int(c[i])) for c in cols) for i in range(m)]
        (out / f"envelope_rep{rep.rep:0{width}d}.csv").write_text("\n".join(lines) + "\n")
    means = [result.mean_true_discoveries(c) for c in BOUND_COLUMNS]
    lines = [header] + [str(i + 1) + "," + ",".join(fmt(c[i]) for c in means) for i in range(m)]
    (out / "envelope_mean.csv").write_text("\n".join(lines) + "\n")
    reps = len(result.replicates)
    coverage = {
        "alpha": result.config.alpha,
        "reps": reps,
        "violations": result.violations,
        "rate": result.violations / reps,
    }
    (out / "coverage.json").write_text(json.dumps(coverage) + "\n")


def cmd_ratio_curve(args) -> int:
    K = args.K if args.K is not None else args.m / args.s
    inp = RatioCurveInput(
        m=args.m, s=args.s, K=K, r=args.r, alpha=args.alpha,
        mu_grid=mu_grid(args.mu_from, args.mu_to, args.mu_step),
    )
    _emit_csv(["mu", "ratio"], ([fmt(mu), fmt(v)] for mu, v in ratio_curve(inp)))
    return 0


# --- parser -----------------------------------------------------------------------


def _finite(text: str) -> float:
    x = float(text)
    if not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"{text!r} is not finite")
    return x


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="posthoc", description="Post hoc bounds on false positives from forest-structured reference families.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the forest condition and summarize atoms/depths")
    p.add_argument("family")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bound", help="bound the number of false positives in a selection")
    p.add_argument("family")
    p.add_argument("--method", choices=sorted(_METHODS), default="star")
    p.add_argument("--selection", help="file of 1-based indices, one per line")
    p.add_argument("--topk", type=int, help="select the k smallest p-values of --pvalues")
    p.add_argument("--pvalues")
    p.add_argument("--all-topk", metavar="PVALUES", help="emit the bound of every top-k selection as CSV")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("calibrate", help="attach DKW or GW budgets to a region list")
    p.add_argument("regions")
    p.add_argument("pvalues")
    p.add_argument("--alpha", type=_finite, required=True)
    p.add_argument("--method", choices=["dkw", "gw"], default="dkw")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("envelope", help="true-discovery envelopes over top-k selections")
    p.add_argument("--pvalues", required=True)
    p.add_argument("--alpha", type=_finite, required=True)
    p.add_argument("--regions", help="forest family JSON to calibrate (budgets ignored)")
    p.add_argument("--gamma", type=_finite, help="also emit the hybrid envelope")
    p.add_argument("--method", choices=["dkw", "gw"], default="dkw")
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("simulate", help="run the Gaussian envelope experiment")
    p.add_argument("--m", type=int, default=12800)
    p.add_argument("--s", type=int, default=100)
    p.add_argument("--q", type=int, default=7)
    p.add_argument("--K1", type=int, default=8)
    p.add_argument("--r", type=_finite, default=0.9)
    p.add_argument("--mu", type=_finite, default=3.0)
    p.add_argument("--alpha", type=_finite, default=0.05)
    p.add_argument("--gamma", type=_finite, default=0.02)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scatter", action="store_true", help="spread signal atoms instead of packing them")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ratio-curve", help="analytic DKW/Simes expected-bound ratio against effect size")
    p.add_argument("--m", type=_finite, default=1e7)
    p.add_argument("--s", type=_finite, default=1e7 ** (2 / 3))
    p.add_argument("--K", type=_finite, default=None, help="defaults to m/s")
    p.add_argument("--r", type=_finite, default=0.6)
    p.add_argument("--alpha", type=_finite, default=0.1)
    p.add_argument("--mu-from", type=_finite, default=0.0)
    p.add_argument("--mu-to", type=_finite, default=6.0)
    p.add_argument("--mu-step", type=_finite, default=0.1)
    p.set_defaults(func=cmd_ratio_curve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PosthocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, MemoryError, RecursionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
