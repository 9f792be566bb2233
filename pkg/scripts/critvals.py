"""Tabulate supF critical values and their seed-to-seed spread.

    python scripts/critvals.py --points 500 --draws 10000 --seeds 5
"""

import argparse

import numpy as np

from cohortlearn.inference import gp_critical_values


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lower", type=float, default=2 / 3)
    ap.add_argument("--upper", type=float, default=10.0)
    ap.add_argument("--points", type=int, default=500)
    ap.add_argument("--draws", type=int, default=10_000)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    grid = np.linspace(args.lower, args.upper, args.points)
    rows = [gp_critical_values(grid, args.draws, seed=s) for s in range(args.seeds)]
    for level in sorted(rows[0]):
        vals = np.array([r[level] for r in rows])
        print(f"{level:5.2f}  mean {vals.mean():.3f}  sd {vals.std(ddof=1) if vals.size > 1 else 0:.3f}  "
              f"range [{vals.min():.3f}, {vals.max():.3f}]")


if __name__ == "__main__":
    main()
