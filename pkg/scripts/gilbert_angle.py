"""Branch angle of the optimal symmetric Y network against cos(theta) = 2^(2 alpha - 1) - 1.

Source at the origin, two half-mass sinks at (1, +-h). For small alpha the
branch point slides onto the source and the printed angle is the angle the
sinks subtend there.

    python3 scripts/gilbert_angle.py --h 0.3
"""

import argparse
import math

import numpy as np

from branchtrans.branched import SteinerTopology, gilbert_energy, optimize_branch_points


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--h", type=float, default=0.3)
    args = ap.parse_args()

    top = SteinerTopology(3, 1, ((0, 3), (1, 3), (2, 3)))
    terms = np.array([(0.0, 0.0), (1.0, args.h), (1.0, -args.h)])
    print(f"{'alpha':>6} {'branch x':>10} {'cos':>10} {'predicted':>10} {'energy':>10}")
    for alpha in np.round(np.arange(0.3, 1.0001, 0.05), 2):
        g = optimize_branch_points(top, terms, [1.0, -0.5, -0.5], float(alpha))
        b = g.steiner_points[0] if len(g.steiner_points) else terms[0]
        u, w = terms[1] - b, terms[2] - b
        cos = float(u @ w / (np.linalg.norm(u) * np.linalg.norm(w)))
        pred = 2 ** (2 * alpha - 1) - 1
        flag = "" if len(g.steiner_points) else "  collapsed"
        print(f"{alpha:6.2f} {b[0]:10.6f} {cos:10.6f} {pred:10.6f} {gilbert_energy(g, float(alpha)):10.6f}{flag}")
    print(f"\nangle subtended at the source: cos = {math.cos(2 * math.atan(args.h)):.6f}")


if __name__ == "__main__":
    main()
