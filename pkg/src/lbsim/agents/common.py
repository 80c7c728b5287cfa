"""Shared agent machinery: feature building, normalization, replay buffers."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass


import numpy as np

from ..balancer import ACTION_LEVELS

STATS_PER_SERVER = 6  # q + (mean, std, p90, discounted mean, discounted p90)


def observation_features(obs) -> np.ndarray:
    """Flatten a balancer Observation into [q_j, 5 duration stats]*n."""
    out = []
    for j, q in enumerate(obs.q):
        out.append(float(q))
        out.extend(obs.stats[j])
    return np.asarray(out)


def action_one_hot(indices, n_levels: int) -> np.ndarray:
    """Per-head one-hot of the previous factored action, flattened."""
    indices = np.asarray(indices, dtype=int)
    out = np.zeros((indices.size, n_levels))
    out[np.arange(indices.size), indices] = 1.0
    return out.reshape(-1)


def weights_to_indices(weights, levels=ACTION_LEVELS) -> np.ndarray:
    lv = np.asarray(levels)
    return np.asarray([int(np.argmin(np.abs(lv - w))) for w in weights])


class RunningNorm:
    """Welford running mean/variance; frozen at evaluation time."""

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.frozen = False

    def update(self, x: np.ndarray):
        if self.frozen:
            return
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        if self.count < 2:
            return x
        std = np.sqrt(self.m2 / self.count)
        return (x - self.mean) / np.maximum(std, 1e-6)

    def state(self) -> dict:
        return {"count": np.array([self.count]), "mean": self.mean, "m2": self.m2}

    def load(self, state: dict):
        self.count = int(state["count"][0])
        self.mean = np.asarray(state["mean"], dtype=float)
        self.m2 = np.asarray(state["m2"], dtype=float)


class TransitionBuffer:
    """Flat FIFO replay for SAC agents."""

    def __init__(self, capacity: int = 3000):
        self.items: deque = deque(maxlen=capacity)

    def add(self, transition):
        self.items.append(transition)

    def __len__(self):
        return len(self.items)

    def sample(self, batch_size: int, rng) -> list:
        k = min(batch_size, len(self.items))
        idx = rng.choice(len(self.items), size=k, replace=False)
        return [self.items[i] for i in idx]


@dataclass
class Episode:
    obs: np.ndarray  # (T, m, obs_dim), unnormalized
    prev_actions: np.ndarray  # (T, m, n_heads) level indices entering each step
    actions: np.ndarray  # (T, m, n_heads) level indices taken
    rewards: np.ndarray  # (T,) reward following each step
    states: np.ndarray  # (T, state_dim) true global state, unnormalized

    @property
    def steps(self) -> int:
        return self.obs.shape[0]


class EpisodeBuffer:
    """Whole-episode FIFO store for recurrent QMIX training, capped in steps."""

    def __init__(self, capacity_steps: int = 3000):
        self.capacity_steps = capacity_steps
        self.episodes: deque = deque()
        self._steps = 0

    def add(self, episode: Episode):
        self.episodes.append(episode)
        self._steps += episode.steps
        while self._steps > self.capacity_steps and len(self.episodes) > 1:
            gone = self.episodes.popleft()
            self._steps -= gone.steps

    def __len__(self):
        return len(self.episodes)

    @property
    def total_steps(self) -> int:
        return self._steps

    def sample(self, batch_size: int, rng) -> list:
        k = min(batch_size, len(self.episodes))
        idx = rng.choice(len(self.episodes), size=k, replace=False)
        return [self.episodes[i] for i in idx]
