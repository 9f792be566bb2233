"""Compare the averaged numerical Hessian with its limit across sample sizes.

    python scripts/hessian_gap.py --k 2,4,6 --reps 20
"""

import argparse

import numpy as np

from cohortlearn.estimator import Theta, estimate, nu_n
from cohortlearn.panel import DgpConfig, simulate_dgp
from cohortlearn.theory import LimitParams, ar1_long_run_variance, hessian_c


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", default="2,4,6")
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=606)
    args = ap.parse_args()
    for k in (int(v) for v in args.k.split(",")):
        cfg = DgpConfig(k=k, seed=args.seed)
        lim = LimitParams.plug_in(cfg.n_resolved, cfg.u_resolved, cfg.l, ar1_long_run_variance(cfg.phi_y))
        C = hessian_c(Theta(cfg.beta0, cfg.gamma0), lim)
        M = np.mean([estimate(simulate_dgp(cfg, r), cfg.plm_config).hessian for r in range(args.reps)], axis=0)
        M = M / (2 * nu_n(cfg.n_resolved))
        dist = np.linalg.norm(M - C) / np.linalg.norm(C)
        print(f"k={k}: M/(2 nu_n)={np.round(M, 4).tolist()}  C={np.round(C, 4).tolist()}  rel. Frobenius {dist:.3f}")


if __name__ == "__main__":
    main()
