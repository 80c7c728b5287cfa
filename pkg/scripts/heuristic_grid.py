"""Sweep the heuristic policies over a utilization grid and tabulate mean FCT.

Writes one comparison.csv per utilization level plus a wide summary table,
mirroring the simulator's `evaluate` subcommand across traffic intensities.

Usage:
    python scripts/heuristic_grid.py --preset moderate --out results/grid
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from lbsim.config import preset
from lbsim.engine import run_episode
from lbsim.metrics import jct_summary
from lbsim.policies import make_policy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="moderate", choices=("moderate", "large", "reduced"))
    ap.add_argument("--utilizations", default="0.5,0.7,0.85,0.95")
    ap.add_argument("--methods", default="ecmp,wcmp,awcmp,lsq,sed")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    utils = [float(u) for u in args.utilizations.split(",")]
    methods = args.methods.split(",")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    summary = []
    for util in utils:
        scenario = preset(args.preset, utilization=util)
        rate = scenario.traffic.rate
        print(f"-- utilization {util:.2f} (rate {rate:.1f} flows/s)")
        for method in methods:
            policy = make_policy(method)
            means = []
            for seed in range(args.seeds):
                result = run_episode(scenario, policy, seed=seed)
                means.append(float(np.mean(result.fcts())))
            mean, std = float(np.mean(means)), float(np.std(means))
            summary.append([util, f"{rate:.1f}", method, f"{mean:.6f}", f"{std:.6f}"])
            print(f"   {method:>6}: mean FCT {mean:.4f} +/- {std:.4f}")
        per_util = out / f"util_{util:.2f}"
        per_util.mkdir(exist_ok=True)
        with open(per_util / "comparison.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "class", "count", "mean", "std", "p90", "p99"])
            for method in methods:
                policy = make_policy(method)
                flows = []
                for seed in range(args.seeds):
                    flows.extend(run_episode(scenario, policy, seed=seed).flows)
                for klass, s in jct_summary(flows).items():
                    w.writerow([method, klass, s.count, s.mean, s.std, s.p90, s.p99])

    with open(out / "grid_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["utilization", "rate", "method", "mean_fct", "std_over_seeds"])
        w.writerows(summary)
    print(f"summary in {out / 'grid_summary.csv'}")


if __name__ == "__main__":
    main()
