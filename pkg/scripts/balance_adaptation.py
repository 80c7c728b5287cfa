"""Compare busy-worker balance of a trained agent against mis-weighted SED.

The server pool has a fast group (speed 2) and a slow group (speed 1), so the
ideal busy-worker occupancy ratio between groups tracks the capacity ratio.
SED is run with deliberately wrong 3:1 static weights; the trained agent has
to discover the true ratio from observations.

Usage:
    python scripts/balance_adaptation.py --checkpoint results/rl/qmix/checkpoint.npz
"""

import argparse

import numpy as np

from lbsim.agents.train import load_policy
from lbsim.config import preset
from lbsim.engine import run_episode
from lbsim.policies import make_policy


def group_ratio(scenario, result):
    """Mean busy workers per fast-group slot over mean per slow-group slot."""
    busy = np.asarray(result.busy_series, dtype=float)  # (steps, n)
    fast = [j for j, s in enumerate(scenario.servers) if s.speed > 1.0]
    slow = [j for j, s in enumerate(scenario.servers) if s.speed <= 1.0]
    fast_load = busy[:, fast].mean()
    slow_load = busy[:, slow].mean()
    return fast_load / max(slow_load, 1e-9)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    policy, scenario, run = load_policy(args.checkpoint, mode="eval")
    fast = [s for s in scenario.servers if s.speed > 1.0]
    slow = [s for s in scenario.servers if s.speed <= 1.0]
    # when per-server utilizations equalize, mean busy workers scale with the
    # provisioned worker counts, so that ratio is the balance target
    cap_ratio = sum(s.workers for s in fast) / len(fast)
    cap_ratio /= sum(s.workers for s in slow) / len(slow)
    print(f"balanced busy-worker ratio fast:slow = {cap_ratio:.2f}")

    misweighted = make_policy(
        "sed", weights=[3.0 if s.speed > 1.0 else 1.0 for s in scenario.servers]
    )
    for name, pol in ((run.agent, policy), ("sed(3:1)", misweighted)):
        ratios = [
            group_ratio(scenario, run_episode(scenario, pol, seed=s))
            for s in range(args.seeds)
        ]
        r = float(np.mean(ratios))
        print(f"{name:>9}: busy-worker ratio {r:.2f} (|log error| {abs(np.log(r / cap_ratio)):.3f})")


if __name__ == "__main__":
    main()
