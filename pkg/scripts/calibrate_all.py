"""Fit the separation constant for each metric family and print a summary table."""
import argparse
import json
from pathlib import Path

from orienteer.harness import calibrate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    reports = {f: calibrate(f, args.n, args.trials, args.seed) for f in ("1d", "euclidean", "uniform")}
    print(f"{'family':<10} {'kappa_fit':>10} {'ci':>22} {'holdout':>8} {'kappa_prime':>12}")
    for f, r in reports.items():
        ci = f"[{r['ci'][0]:.3f}, {r['ci'][1]:.3f}]"
        print(f"{f:<10} {r['kappa_fit']:>10.3f} {ci:>22} {str(r['holdout_ok']):>8} {r['kappa_prime']:>12}")
    if args.out:
        args.out.write_text(json.dumps(reports, indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
