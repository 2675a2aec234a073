"""Analytical sensitivities against finite differences over step sizes and loadings.

    python scripts/sensitivity_study.py --nodes 30 --seeds 5
"""

import argparse

import numpy as np

from p2pgrid.feeders import random_radial
from p2pgrid.sensitivity import finite_difference_check


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=30)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", default="1e-3,1e-4,1e-5,1e-6")
    ap.add_argument("--loadings", default="0.0,0.02,0.05")
    args = ap.parse_args()
    steps = [float(s) for s in args.steps.split(",")]
    print("seed,loading_pu,step,max_rel_error_vsc,max_rel_error_lsf,entries")
    for seed in range(args.seeds):
        net = random_radial(args.nodes, seed)
        rng = np.random.default_rng(seed)
        for scale in (float(x) for x in args.loadings.split(",")):
            n = net.n_nodes
            inj = np.r_[0, rng.normal(0, scale, n - 1) + 1j * rng.normal(0, scale / 4, n - 1)]
            for h in steps:
                rep = finite_difference_check(net, inj, step=h)
                print(f"{seed},{scale},{h:g},{rep.max_rel_error_vsc:.3e},"
                      f"{rep.max_rel_error_lsf:.3e},{rep.n_compared}")


if __name__ == "__main__":
    main()
