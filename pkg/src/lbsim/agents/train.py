"""Training loops and checkpoint loading for the weight-setting agents."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from ..config import ScenarioConfig, from_dict as scenario_from_dict, to_dict as scenario_to_dict
from ..engine import run_episode, stream_rng
from ..metrics import summarize_fcts
from ..nets import load_checkpoint, save_checkpoint
from .common import STATS_PER_SERVER, EpisodeBuffer, TransitionBuffer
from .qmix import QmixLearner, QmixPolicy
from .sac import DiscreteSac, SacPolicy

AGENT_KINDS = ("qmix", "isac", "ssac")


@dataclass
class RunConfig:
    agent: str = "qmix"
    episodes: int = 72
    updates_per_episode: int = 25
    batch_size: int = 12
    buffer_steps: int = 3000
    lr: float = 1e-3
    gamma: float = 0.9
    hidden: int = 64
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 30
    seed: int = 0

    def validate(self):
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.agent!r}")
        if self.episodes < 1 or self.updates_per_episode < 0:
            raise ValueError("episodes and updates_per_episode must be positive")

    def epsilon_at(self, episode: int) -> float:
        if self.epsilon_decay_episodes <= 0:
            return self.epsilon_end
        frac = min(1.0, episode / self.epsilon_decay_episodes)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def _dims(scenario: ScenarioConfig):
    obs_dim = STATS_PER_SERVER * scenario.n_servers
    state_dim = 3 * scenario.n_servers + 1
    return obs_dim, state_dim


def build_policy(run: RunConfig, scenario: ScenarioConfig, mode: str = "train"):
    run.validate()
    obs_dim, state_dim = _dims(scenario)
    rng = stream_rng(run.seed, "policy")
    heads = scenario.n_servers
    if run.agent == "ssac" and scenario.lb_count != 1:
        raise ValueError("ssac expects a single-balancer scenario")
    if run.agent == "qmix":
        learner = QmixLearner(
            obs_dim,
            state_dim,
            n_agents=scenario.lb_count,
            n_heads=heads,
            hidden=run.hidden,
            lr=run.lr,
            gamma=run.gamma,
            rng=rng,
        )
        return QmixPolicy(learner, mode=mode)
    n_agents = 1 if run.agent == "ssac" else scenario.lb_count
    agents = [
        DiscreteSac(obs_dim, heads, hidden=run.hidden, lr=run.lr, gamma=run.gamma, rng=rng)
        for _ in range(n_agents)
    ]
    return SacPolicy(agents, mode=mode)


def train(
    run: RunConfig,
    scenario: ScenarioConfig,
    out_dir=None,
    log=print,
    policy=None,
    start_episode: int = 0,
):
    """Train one agent on one scenario; returns (policy, per-episode records).

    Pass a previously loaded `policy` plus `start_episode` to resume; the
    episode counter then continues from where the checkpoint left off."""
    run.validate()
    scenario.validate()
    if run.agent == "ssac" and scenario.lb_count != 1:
        scenario = replace(scenario, lb_count=1)
    if policy is None:
        policy = build_policy(run, scenario)
    elif policy.mode != "train":
        raise ValueError("resumed policy must be loaded in train mode")
    sample_rng = stream_rng(run.seed, "policy")
    replay = (
        EpisodeBuffer(run.buffer_steps)
        if run.agent == "qmix"
        else TransitionBuffer(run.buffer_steps)
    )
    history = []
    t0 = time.time()
    for ep in range(start_episode, run.episodes):
        if run.agent == "qmix":
            policy.epsilon = run.epsilon_at(ep)
        ep_seed = run.seed * 100003 + ep
        result = run_episode(scenario, policy, seed=ep_seed)
        fcts = result.fcts()
        stats = summarize_fcts(fcts) if len(fcts) else None
        rewards = result.rewards[1:]  # r_{t+1} aligned with each control step
        if run.agent == "qmix":
            replay.add(policy.build_episode(rewards))
        else:
            agent_rewards = (
                result.agent_rewards if scenario.reward_scope == "local" else None
            )
            per_agent = policy.build_transitions(rewards, agent_rewards)
            for agent_idx, items in enumerate(per_agent):
                for tr in items:
                    replay.add((agent_idx, tr))

        losses = []
        for _ in range(run.updates_per_episode):
            if run.agent == "qmix":
                if len(replay) < 2:
                    break
                batch = replay.sample(run.batch_size, sample_rng)
                losses.append(
                    policy.learner.update(batch, policy.norm, policy.state_norm)
                )
            else:
                if len(replay) < run.batch_size:
                    break
                tagged = replay.sample(run.batch_size, sample_rng)
                for agent_idx, agent in enumerate(policy.agents):
                    batch = [tr for i, tr in tagged if i == agent_idx]
                    if batch:
                        info = agent.update(batch, policy.norm)
                        losses.append(info["critic_loss"])
        rec = {
            "episode": ep,
            "mean_reward": float(np.mean(rewards)),
            "mean_fct": float(stats.mean) if stats else float("nan"),
            "p90_fct": float(stats.p90) if stats else float("nan"),
            "loss": float(np.mean(losses)) if losses else float("nan"),
            "saturated": int(result.saturated),
        }
        history.append(rec)
        if log is not None and (ep % 8 == 0 or ep == run.episodes - 1):
            log(
                f"ep {ep:3d}  reward {rec['mean_reward']:+.4f}  "
                f"mean FCT {rec['mean_fct']:.3f}  p90 {rec['p90_fct']:.3f}  "
                f"[{time.time() - t0:.0f}s]"
            )
    if out_dir is not None:
        from pathlib import Path

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "learning_curve.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(history[0].keys()))
            writer.writeheader()
            writer.writerows(history)
        save_policy(out_dir / "checkpoint.npz", run, scenario, policy, episodes_done=run.episodes)
    return policy, history


def save_policy(path, run: RunConfig, scenario: ScenarioConfig, policy, episodes_done: int = 0):
    arrays = {}
    if run.agent == "qmix":
        arrays.update(policy.learner.arrays())
        for key, a in policy.state_norm.state().items():
            arrays[f"state_norm.{key}"] = a
    else:
        for i, agent in enumerate(policy.agents):
            arrays.update(agent.arrays(f"agent{i}."))
    for key, a in policy.norm.state().items():
        arrays[f"norm.{key}"] = a
    meta = {
        "agent": run.agent,
        "hidden": run.hidden,
        "lr": run.lr,
        "gamma": run.gamma,
        "seed": run.seed,
        "episodes_done": episodes_done,
        "scenario": scenario_to_dict(scenario),
    }
    save_checkpoint(path, arrays, meta)


def load_policy(path, mode: str = "eval"):
    """Rebuild a trained policy (and its scenario) from a checkpoint file."""
    arrays, meta = load_checkpoint(path)
    scenario = scenario_from_dict(meta["scenario"])
    run = RunConfig(
        agent=meta["agent"],
        hidden=int(meta["hidden"]),
        lr=float(meta["lr"]),
        gamma=float(meta["gamma"]),
        seed=int(meta["seed"]),
    )
    policy = build_policy(run, scenario, mode=mode)
    if run.agent == "qmix":
        policy.learner.load_arrays(arrays)
        policy.state_norm.load(
            {k.split(".", 1)[1]: v for k, v in arrays.items() if k.startswith("state_norm.")}
        )
    else:
        for i, agent in enumerate(policy.agents):
            agent.load_arrays(arrays, f"agent{i}.")
    policy.norm.load(
        {k.split(".", 1)[1]: v for k, v in arrays.items() if k.startswith("norm.")}
    )
    policy.norm.frozen = mode == "eval"
    if run.agent == "qmix":
        policy.state_norm.frozen = mode == "eval"
    return policy, scenario, run
