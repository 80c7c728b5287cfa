"""Discrete soft actor-critic with per-server factored action heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..balancer import ACTION_LEVELS
from ..nets import Adam, GruMlp
from ..policies import ControlPolicy
from .common import RunningNorm, TransitionBuffer, action_one_hot, observation_features


@dataclass
class SacTransition:
    raw_obs: np.ndarray
    last_idx: np.ndarray  # action indices entering the step
    hiddens: tuple  # (actor, critic1, critic2) GRU states at rollout time
    action: np.ndarray
    reward: float
    next_raw_obs: np.ndarray
    next_hiddens: tuple
    done: bool


def _stable_log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class DiscreteSac:
    """Twin-critic discrete SAC; policy and critics share a GRU+MLP trunk shape.

    Actions factor into one softmax per server head, so expectations over the
    discrete levels are computed in closed form."""

    def __init__(
        self,
        obs_dim: int,
        n_heads: int,
        n_levels: int = len(ACTION_LEVELS),
        hidden: int = 64,
        lr: float = 1e-3,
        gamma: float = 0.9,
        polyak: float = 0.005,
        target_entropy_scale: float = 0.98,
        rng=None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim = obs_dim
        self.n_heads = n_heads
        self.n_levels = n_levels
        self.hidden = hidden
        self.gamma = gamma
        self.polyak = polyak
        in_dim = obs_dim + n_heads * n_levels
        out = n_heads * n_levels
        self.actor = GruMlp(in_dim, hidden, [hidden, out], rng)
        self.critic1 = GruMlp(in_dim, hidden, [hidden, out], rng)
        self.critic2 = GruMlp(in_dim, hidden, [hidden, out], rng)
        self.target1 = GruMlp(in_dim, hidden, [hidden, out], rng)
        self.target2 = GruMlp(in_dim, hidden, [hidden, out], rng)
        self.target1.copy_from(self.critic1)
        self.target2.copy_from(self.critic2)
        self.log_alpha = Tensor(np.array([0.0]), requires_grad=True)
        self.target_entropy = n_heads * target_entropy_scale * np.log(n_levels)
        self.opt_actor = Adam(self.actor.parameters(), lr=lr)
        self.opt_critic = Adam(self.critic1.parameters() + self.critic2.parameters(), lr=lr)
        self.opt_alpha = Adam([self.log_alpha], lr=lr)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.data[0]))

    def initial_hiddens(self) -> tuple:
        z = np.zeros((1, self.hidden))
        return (z.copy(), z.copy(), z.copy())

    def _input(self, raw_norm: np.ndarray, last_idx: np.ndarray) -> np.ndarray:
        return np.concatenate([raw_norm, action_one_hot(last_idx, self.n_levels)])

    def act(self, x: np.ndarray, hiddens: tuple, rng, mode: str = "train"):
        """One decision; returns (level indices per head, advanced hiddens)."""
        xt = x[None, :]
        logits, ha = self.actor.forward_numpy(xt, hiddens[0])
        _, h1 = self.critic1.forward_numpy(xt, hiddens[1])
        _, h2 = self.critic2.forward_numpy(xt, hiddens[2])
        logp = _stable_log_softmax(logits.reshape(self.n_heads, self.n_levels))
        if not np.isfinite(logp).all():
            raise RuntimeError("non-finite policy logits")
        if mode == "eval":
            idx = logp.argmax(axis=-1)
        else:
            probs = np.exp(logp)
            idx = np.array([rng.choice(self.n_levels, p=p) for p in probs])
        return idx, (ha, h1, h2)

    def head_probs(self, x: np.ndarray, hidden: np.ndarray) -> np.ndarray:
        logits, _ = self.actor.forward_numpy(x[None, :], hidden)
        return np.exp(_stable_log_softmax(logits.reshape(self.n_heads, self.n_levels)))

    # -- updates --------------------------------------------------------------

    def _forward_heads(self, net, x: Tensor, h: Tensor) -> Tensor:
        out, _ = net(x, h)
        return out.reshape(-1, self.n_heads, self.n_levels)

    def update(self, batch: list, norm: RunningNorm) -> dict:
        B = len(batch)
        x = np.stack([self._input(norm.normalize(t.raw_obs), t.last_idx) for t in batch])
        x2 = np.stack([self._input(norm.normalize(t.next_raw_obs), t.action) for t in batch])
        ha = np.concatenate([t.hiddens[0] for t in batch])
        h1 = np.concatenate([t.hiddens[1] for t in batch])
        h2 = np.concatenate([t.hiddens[2] for t in batch])
        ha2 = np.concatenate([t.next_hiddens[0] for t in batch])
        h12 = np.concatenate([t.next_hiddens[1] for t in batch])
        h22 = np.concatenate([t.next_hiddens[2] for t in batch])
        actions = np.stack([t.action for t in batch])
        rewards = np.array([t.reward for t in batch])
        done = np.array([float(t.done) for t in batch])
        alpha = self.alpha

        # soft state value from target critics and the current policy
        shape = (-1, self.n_heads, self.n_levels)
        logits2 = self.actor.forward_numpy(x2, ha2)[0].reshape(shape)
        logp2 = _stable_log_softmax(logits2)
        probs2 = np.exp(logp2)
        q1t = self.target1.forward_numpy(x2, h12)[0].reshape(shape)
        q2t = self.target2.forward_numpy(x2, h22)[0].reshape(shape)
        v = (probs2 * (np.minimum(q1t, q2t) - alpha * logp2)).sum(axis=(1, 2))
        y = rewards + self.gamma * (1.0 - done) * v

        # critics regress the chosen factored action's summed Q to the target
        idx = actions[:, :, None]
        q1 = self._forward_heads(self.critic1, Tensor(x), Tensor(h1)).take_along(idx).sum(axis=2).sum(axis=1)
        q2 = self._forward_heads(self.critic2, Tensor(x), Tensor(h2)).take_along(idx).sum(axis=2).sum(axis=1)
        yt = Tensor(y)
        critic_loss = ((q1 - yt) * (q1 - yt)).mean() + ((q2 - yt) * (q2 - yt)).mean()
        self.opt_critic.zero_grad()
        critic_loss.backward()
        self.opt_critic.step()

        # actor minimizes E_pi[alpha log pi - min Q] in closed form per head
        qmin = np.minimum(
            self.critic1.forward_numpy(x, h1)[0].reshape(shape),
            self.critic2.forward_numpy(x, h2)[0].reshape(shape),
        )
        logits = self._forward_heads(self.actor, Tensor(x), Tensor(ha))
        logp = logits.log_softmax(axis=-1)
        probs = logp.exp()
        actor_loss = (probs * (logp * alpha - Tensor(qmin))).sum(axis=2).sum(axis=1).mean()
        self.opt_actor.zero_grad()
        actor_loss.backward()
        self.opt_actor.step()

        # temperature tracks the per-head entropy target
        entropy = -(np.exp(logp.data) * logp.data).sum(axis=(1, 2)).mean()
        alpha_loss = self.log_alpha * (entropy - self.target_entropy)
        self.opt_alpha.zero_grad()
        alpha_loss.sum().backward()
        self.opt_alpha.step()

        for online, target in ((self.critic1, self.target1), (self.critic2, self.target2)):
            for p, tp in zip(online.parameters(), target.parameters()):
                tp.data = (1.0 - self.polyak) * tp.data + self.polyak * p.data

        return {
            "critic_loss": float(critic_loss.data),
            "actor_loss": float(actor_loss.data),
            "alpha_loss": float(alpha_loss.data[0]),
            "alpha": self.alpha,
            "entropy": float(entropy),
        }

    def arrays(self, prefix: str) -> dict:
        out = {f"{prefix}log_alpha": self.log_alpha.data}
        for name, net in (
            ("actor", self.actor),
            ("critic1", self.critic1),
            ("critic2", self.critic2),
            ("target1", self.target1),
            ("target2", self.target2),
        ):
            for i, a in enumerate(net.state_arrays()):
                out[f"{prefix}{name}.{i}"] = a
        return out

    def load_arrays(self, arrays: dict, prefix: str):
        self.log_alpha.data = np.asarray(arrays[f"{prefix}log_alpha"], dtype=float).copy()
        for name, net in (
            ("actor", self.actor),
            ("critic1", self.critic1),
            ("critic2", self.critic2),
            ("target1", self.target1),
            ("target2", self.target2),
        ):
            n = len(net.parameters())
            net.load_arrays([arrays[f"{prefix}{name}.{i}"] for i in range(n)])


class SacPolicy(ControlPolicy):
    """Adapter giving one SAC agent per balancer (m=1 covers the single-agent case)."""

    decision_kind = "rl"

    def __init__(self, agents: list, levels=ACTION_LEVELS, mode: str = "train"):
        self.agents = agents
        self.levels = list(levels)
        self.mode = mode
        self.name = "ssac" if len(agents) == 1 else "isac"
        self.norm = RunningNorm(agents[0].obs_dim)
        self._rng = None
        self._hiddens = None
        self._last_idx = None
        self.log = None  # per-step rollout record for transition building

    def needs_observations(self) -> bool:
        return True

    def start_episode(self, scenario, seed: int):
        from ..engine import stream_rng

        if len(self.agents) != scenario.lb_count:
            raise ValueError(
                f"{len(self.agents)} agents bound to {scenario.lb_count} balancers"
            )
        self._rng = stream_rng(seed, "policy")
        self._hiddens = [a.initial_hiddens() for a in self.agents]
        self._last_idx = [np.zeros(a.n_heads, dtype=int) for a in self.agents]
        self.log = []

    def control(self, step_index, now, observations, global_state):
        weights = []
        step_rec = []
        for i, agent in enumerate(self.agents):
            raw = observation_features(observations[i])
            if self.mode == "train":
                self.norm.update(raw)
            x = agent._input(self.norm.normalize(raw), self._last_idx[i])
            pre_hiddens = self._hiddens[i]
            idx, self._hiddens[i] = agent.act(x, pre_hiddens, self._rng, self.mode)
            step_rec.append((raw, self._last_idx[i].copy(), pre_hiddens, idx))
            self._last_idx[i] = idx
            weights.append([self.levels[k] for k in idx])
        self.log.append(step_rec)
        return weights

    def final_hiddens(self, agent_index: int) -> tuple:
        return self._hiddens[agent_index]

    def build_transitions(self, rewards, agent_rewards=None):
        """Turn the episode log plus rewards into per-agent SacTransitions.

        `rewards` holds r_{t+1} for each step t; `agent_rewards` substitutes
        per-agent local rewards when the scenario uses them."""
        out = [[] for _ in self.agents]
        T = len(self.log)
        for i in range(len(self.agents)):
            for t in range(T):
                raw, last_idx, hiddens, idx = self.log[t][i]
                if t + 1 < T:
                    next_raw, _, next_hiddens, _ = self.log[t + 1][i]
                else:
                    next_raw, next_hiddens = raw, self.final_hiddens(i)
                r = agent_rewards[i][t] if agent_rewards is not None else rewards[t]
                out[i].append(
                    SacTransition(
                        raw_obs=raw,
                        last_idx=last_idx,
                        hiddens=hiddens,
                        action=idx,
                        reward=r,
                        next_raw_obs=next_raw,
                        next_hiddens=next_hiddens,
                        done=t + 1 == T,
                    )
                )
        return out
