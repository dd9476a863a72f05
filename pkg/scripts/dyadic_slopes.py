"""Hierarchical dyadic costs of the uniform measure on [0,1)^d against the closed-form bound.

Prints one row per (alpha, j) and the log2 regression slope per alpha.
Below the threshold 1 - 1/d only truncated costs (levels 0..j) exist, and
they grow without bound.

    python3 scripts/dyadic_slopes.py --dim 2 --alphas 0.4,0.85,0.9,0.95 --jmax 8
"""

import argparse
import csv
import sys

from branchtrans.branched import dyadic_rhs_bound, dyadic_truncated_cost, dyadic_upper_bound, log2_slope
from branchtrans.geometry import CellWeights, DomainBox


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--alphas", default="0.4,0.85,0.9,0.95")
    ap.add_argument("--jmin", type=int, default=1)
    ap.add_argument("--jmax", type=int, default=8)
    args = ap.parse_args()

    leb = CellWeights.lebesgue(DomainBox(args.dim))
    js = list(range(args.jmin, args.jmax + 1))
    out = csv.writer(sys.stdout)
    out.writerow(["alpha", "j", "kind", "cost", "rhs", "ratio"])
    slopes = {}
    for alpha in map(float, args.alphas.split(",")):
        above = alpha > 1 - 1 / args.dim
        costs = []
        for j in js:
            if above:
                cost, rhs = dyadic_upper_bound(leb, j, alpha), dyadic_rhs_bound(args.dim, alpha, 1.0, j)
                out.writerow([alpha, j, "full", f"{cost:.12g}", f"{rhs:.12g}", f"{cost / rhs:.15f}"])
            else:
                cost = dyadic_truncated_cost(leb, j, alpha)
                out.writerow([alpha, j, "truncated", f"{cost:.12g}", "", ""])
            costs.append(cost)
        slopes[alpha] = (log2_slope(js, costs), args.dim * (1 - alpha) - 1 if above else None)
    print()
    for alpha, (slope, predicted) in slopes.items():
        note = f"predicted {predicted:+.4f}" if predicted is not None else "below threshold"
        print(f"alpha={alpha:<5} slope={slope:+.4f}  ({note})")


if __name__ == "__main__":
    main()
