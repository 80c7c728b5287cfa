"""Train one or more weight-setting agents and compare them against LSQ/SED.

Each agent kind trains on the chosen preset, then the frozen policy is
evaluated on held-out seeds alongside the two strongest heuristics.

Usage:
    python scripts/train_agents.py --preset reduced --agents qmix --episodes 72 --out results/rl
"""

import argparse
from pathlib import Path

import numpy as np

from lbsim.agents.train import RunConfig, train
from lbsim.config import preset
from lbsim.engine import run_episode
from lbsim.policies import make_policy


def eval_policy(policy, scenario, seeds):
    means = []
    for seed in seeds:
        result = run_episode(scenario, policy, seed=seed)
        means.append(float(np.mean(result.fcts())))
    return float(np.mean(means))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="reduced", choices=("moderate", "large", "reduced"))
    ap.add_argument("--agents", default="qmix", help="comma list from qmix,isac,ssac")
    ap.add_argument("--episodes", type=int, default=72)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eval-seeds", type=int, default=5)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    scenario = preset(args.preset)
    eval_seeds = [10_000 + s for s in range(args.eval_seeds)]
    out = Path(args.out)

    print("heuristic baselines:")
    for name in ("lsq", "sed"):
        print(f"  {name}: mean FCT {eval_policy(make_policy(name), scenario, eval_seeds):.4f}")

    for kind in args.agents.split(","):
        run = RunConfig(agent=kind, episodes=args.episodes, seed=args.seed)
        print(f"== training {kind} ({args.episodes} episodes)")
        policy, history = train(run, scenario, out_dir=out / kind)
        policy.mode = "eval"
        policy.norm.frozen = True
        if hasattr(policy, "state_norm"):
            policy.state_norm.frozen = True
        scn = scenario if kind != "ssac" else None
        if scn is None:
            from dataclasses import replace

            scn = replace(scenario, lb_count=1)
        mean = eval_policy(policy, scn, eval_seeds)
        first = np.mean([h["mean_reward"] for h in history[:10]])
        last = np.mean([h["mean_reward"] for h in history[-10:]])
        print(f"  {kind}: eval mean FCT {mean:.4f}; reward {first:.4f} -> {last:.4f}")


if __name__ == "__main__":
    main()
