#!/usr/bin/env python3
"""Prior spread of the CAR-shrunk row precision across tau_r choices.

Simulates the wp2 prior of the row precision for each tau_r and prints
per-edge quantile summaries, the tool for choosing how tightly to shrink
towards the adjacency-implied precision.
"""

import argparse

import numpy as np

from smugibbs.mcar import AdjacencyModel, McarSpec, prior_elicitation_sim


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("w_csv", help="0/1 adjacency matrix CSV")
    ap.add_argument("--tau-r", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    ap.add_argument("--rho-fixed", type=float, default=0.9)
    ap.add_argument("--draws", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    adj = AdjacencyModel(np.loadtxt(args.w_csv, delimiter=",", ndmin=2).astype(int))
    for tau_r in args.tau_r:
        spec = McarSpec("wp2", tau_r=tau_r, rho_fixed=args.rho_fixed)
        summaries, _ = prior_elicitation_sim(adj, spec, n_draws=args.draws,
                                             seed=args.seed)
        print(f"tau_r = {tau_r}")
        for (i, j), s in sorted(summaries.items()):
            kind = "diag" if i == j else "edge"
            q = s["quantiles"]
            print(f"  {kind} ({i},{j}) center {s['center']:+.3f}  "
                  f"median {q['0.5']:+.3f}  IQR {s['iqr']:.3f}  "
                  f"95% [{q['0.025']:+.3f}, {q['0.975']:+.3f}]")


if __name__ == "__main__":
    main()
