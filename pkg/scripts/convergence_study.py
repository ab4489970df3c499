"""Step-size convergence of the fixed-step integrator.

Integrates one ensemble at a ladder of step sizes and prints the deviation
between consecutive refinements together with the observed Richardson order,
which should sit near 4.

Usage: python scripts/convergence_study.py [--n 64] [--levels 5]
"""

import argparse

import numpy as np

from kcsflock import (
    InitSpec,
    ModelParams,
    TimeGrid,
    delta_functional,
    integrate,
    sample_ensemble,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--levels", type=int, default=5)
    ap.add_argument("--dt0", type=float, default=0.2)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--kappa", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    init = InitSpec("exponential", dim=2, alpha=1.0)
    ens = sample_ensemble(init, args.n, args.seed)
    params = ModelParams(args.kappa, args.beta)

    base = TimeGrid(0.0, 2.0, args.dt0, snapshot_stride=max(1, round(0.5 / args.dt0)))
    trajs = [integrate(ens.copy(), params, base.refined(2**k)) for k in range(args.levels)]

    print(f"{'dt':>10s} {'max delta vs next':>18s} {'order':>7s}")
    prev_delta = None
    for k in range(args.levels - 1):
        dt = args.dt0 / 2**k
        delta = max(v for _, v in delta_functional(trajs[k], trajs[k + 1]))
        order = "" if prev_delta is None else f"{np.log2(prev_delta / delta):7.2f}"
        print(f"{dt:10.4g} {delta:18.3e} {order:>7s}")
        prev_delta = delta


if __name__ == "__main__":
    main()
