"""QMIX: per-agent recurrent Q networks combined by a monotonic mixing network."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..balancer import ACTION_LEVELS
from ..nets import Adam, GruMlp, Mlp, Module
from ..policies import ControlPolicy
from .common import Episode, RunningNorm, action_one_hot, observation_features


class MonotonicMixer(Module):
    """State-conditioned two-layer mixer; |.| on hypernetwork weights keeps
    dQ_tot/dQ_i >= 0 for every agent."""

    def __init__(self, n_agents: int, state_dim: int, embed: int = 32, hyper_hidden: int = 32, rng=None):
        self.n_agents = n_agents
        self.embed = embed
        self.hyper_w1 = Mlp([state_dim, hyper_hidden, n_agents * embed], rng)
        self.hyper_b1 = Mlp([state_dim, embed], rng)
        self.hyper_w2 = Mlp([state_dim, hyper_hidden, embed], rng)
        self.hyper_b2 = Mlp([state_dim, hyper_hidden, 1], rng)

    def __call__(self, agent_qs: Tensor, state: Tensor) -> Tensor:
        B = agent_qs.shape[0]
        w1 = self.hyper_w1(state).abs().reshape(B, self.n_agents, self.embed)
        b1 = self.hyper_b1(state)
        hidden = ((agent_qs.reshape(B, self.n_agents, 1) * w1).sum(axis=1) + b1).elu()
        w2 = self.hyper_w2(state).abs()
        out = (hidden * w2).sum(axis=1, keepdims=True) + self.hyper_b2(state)
        return out.reshape(B)

    def forward_numpy(self, agent_qs: np.ndarray, state: np.ndarray) -> np.ndarray:
        """Gradient-free mirror of __call__ for the target mixer."""
        B = agent_qs.shape[0]
        w1 = np.abs(self.hyper_w1.forward_numpy(state)).reshape(B, self.n_agents, self.embed)
        b1 = self.hyper_b1.forward_numpy(state)
        pre = (agent_qs[:, :, None] * w1).sum(axis=1) + b1
        hidden = np.where(pre > 0, pre, np.expm1(np.minimum(pre, 0.0)))
        w2 = np.abs(self.hyper_w2.forward_numpy(state))
        return (hidden * w2).sum(axis=1) + self.hyper_b2.forward_numpy(state)[:, 0]


class QmixLearner:
    def __init__(
        self,
        obs_dim: int,
        state_dim: int,
        n_agents: int,
        n_heads: int,
        n_levels: int = len(ACTION_LEVELS),
        hidden: int = 64,
        mix_embed: int = 32,
        hyper_hidden: int = 32,
        lr: float = 1e-3,
        gamma: float = 0.9,
        target_interval: int = 50,
        share_parameters: bool = True,
        rng=None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim = obs_dim
        self.state_dim = state_dim
        self.n_agents = n_agents
        self.n_heads = n_heads
        self.n_levels = n_levels
        self.hidden = hidden
        self.gamma = gamma
        self.target_interval = target_interval
        self.share_parameters = share_parameters
        # shared nets get an agent-id one-hot appended to their input
        self.agent_in = obs_dim + n_heads * n_levels + (n_agents if share_parameters else 0)
        n_nets = 1 if share_parameters else n_agents
        out = n_heads * n_levels
        self.agent_nets = [GruMlp(self.agent_in, hidden, [hidden, out], rng) for _ in range(n_nets)]
        self.target_nets = [GruMlp(self.agent_in, hidden, [hidden, out], rng) for _ in range(n_nets)]
        self.mixer = MonotonicMixer(n_agents, state_dim, mix_embed, hyper_hidden, rng)
        self.target_mixer = MonotonicMixer(n_agents, state_dim, mix_embed, hyper_hidden, rng)
        self._sync_targets()
        params = [p for net in self.agent_nets for p in net.parameters()]
        params += self.mixer.parameters()
        self.opt = Adam(params, lr=lr)
        self.updates = 0
        # target Q_tot per episode is constant between target syncs and
        # normalizer changes, so it is cached rather than recomputed per batch
        self._tv_stamp = None
        self._tv_cache = {}

    def _sync_targets(self):
        for net, tgt in zip(self.agent_nets, self.target_nets):
            tgt.copy_from(net)
        self.target_mixer.copy_from(self.mixer)

    def net_for(self, agent: int) -> GruMlp:
        return self.agent_nets[0 if self.share_parameters else agent]

    def compose_input(self, raw_norm: np.ndarray, last_idx, agent: int) -> np.ndarray:
        parts = [raw_norm, action_one_hot(np.asarray(last_idx), self.n_levels)]
        if self.share_parameters:
            one_hot = np.zeros(self.n_agents)
            one_hot[agent] = 1.0
            parts.append(one_hot)
        return np.concatenate(parts)

    def initial_hidden(self) -> np.ndarray:
        return np.zeros((1, self.hidden))

    def agent_q_values(self, agent: int, x: np.ndarray, hidden: np.ndarray):
        """Per-head Q table (n_heads, n_levels) plus the advanced GRU state."""
        out, h = self.net_for(agent).forward_numpy(x[None, :], hidden)
        return out.reshape(self.n_heads, self.n_levels), h

    def act(self, agent: int, x: np.ndarray, hidden: np.ndarray, rng=None, epsilon: float = 0.0):
        q, h = self.agent_q_values(agent, x, hidden)
        idx = q.argmax(axis=-1)
        if epsilon > 0.0:
            explore = rng.random(self.n_heads) < epsilon
            idx = np.where(explore, rng.integers(self.n_levels, size=self.n_heads), idx)
        return idx.astype(int), h

    # -- training -------------------------------------------------------------

    def _sequence_inputs(self, episodes, obs_norm: RunningNorm) -> np.ndarray:
        """(T, B*m, agent_in) inputs, agents varying fastest within a batch row block."""
        B, T, m = len(episodes), episodes[0].steps, self.n_agents
        obs = np.stack([ep.obs for ep in episodes], axis=1)  # (T, B, m, d)
        obs = obs_norm.normalize(obs.reshape(T, B * m, -1))
        prev = np.stack([ep.prev_actions for ep in episodes], axis=1)
        prev = prev.reshape(T, B * m, self.n_heads)
        one_hot = np.zeros((T, B * m, self.n_heads, self.n_levels))
        np.put_along_axis(one_hot, prev[..., None], 1.0, axis=-1)
        parts = [obs, one_hot.reshape(T, B * m, -1)]
        if self.share_parameters:
            ids = np.tile(np.eye(m), (B, 1))  # (B*m, m), agent-major within block
            parts.append(np.broadcast_to(ids, (T, B * m, m)))
        return np.concatenate(parts, axis=-1)

    def _rows_for_net(self, B: int) -> list:
        if self.share_parameters:
            return [np.arange(B * self.n_agents)]
        return [np.arange(i, B * self.n_agents, self.n_agents) for i in range(self.n_agents)]

    def update(self, episodes: list, obs_norm: RunningNorm, state_norm: RunningNorm) -> float:
        B, T = len(episodes), episodes[0].steps
        if any(ep.steps != T for ep in episodes):
            raise ValueError("episode batch must share a common length")
        xs = self._sequence_inputs(episodes, obs_norm)
        states = np.stack(
            [[state_norm.normalize(ep.states[t]) for ep in episodes] for t in range(T)]
        )  # (T, B, ds)
        actions = np.stack([[ep.actions[t] for ep in episodes] for t in range(T)])  # (T,B,m,heads)
        rewards = np.stack([ep.rewards for ep in episodes], axis=1)  # (T, B)
        states_flat = states.reshape(T * B, -1)

        qtot = self._online_qtot(xs, states_flat, actions)  # Tensor (T*B,)
        target_vals = self._cached_target_vals(episodes, xs, states, obs_norm, state_norm)
        y = rewards.copy()
        y[:-1] += self.gamma * target_vals[1:]

        err = qtot - Tensor(y.reshape(-1))
        loss = (err * err).mean()
        self.opt.zero_grad()
        loss.backward()
        self.opt.step()
        self.updates += 1
        if self.updates % self.target_interval == 0:
            self._sync_targets()
        return float(loss.data)

    def _online_qtot(self, xs, states_flat, actions) -> Tensor:
        """Differentiable Q_tot for the chosen actions, flattened over (t, b).

        The GRU must run step by step, but hidden states are stacked so the
        MLP head and the mixer each run once over the whole batch."""
        from ..autodiff import concat

        T, rows_total, _ = xs.shape
        B = rows_total // self.n_agents
        row_groups = self._rows_for_net(B)
        sel = actions.reshape(T * rows_total, self.n_heads)[:, :, None]
        cols = []
        for g, (net, rows) in enumerate(zip(self.agent_nets, row_groups)):
            stacked = net.gru.sequence(xs[:, rows, :])  # (T*len(rows), hidden)
            q = net.head(stacked).reshape(-1, self.n_heads, self.n_levels)
            if self.share_parameters:
                picked = q.take_along(sel).sum(axis=2).sum(axis=1)
                # rows are (t, b, agent)-ordered; fold agents into the q vector
                return self.mixer(
                    picked.reshape(T * B, self.n_agents), Tensor(states_flat)
                )
            sel_g = actions[:, :, g].reshape(T * B, self.n_heads)[:, :, None]
            cols.append(q.take_along(sel_g).sum(axis=2).sum(axis=1).reshape(T * B, 1))
        return self.mixer(concat(cols, axis=1), Tensor(states_flat))

    def _cached_target_vals(self, episodes, xs, states, obs_norm, state_norm) -> np.ndarray:
        """(T, B) target Q_tot, recomputing only for uncached episodes."""
        T, B, m = xs.shape[0], len(episodes), self.n_agents
        stamp = (self.updates // self.target_interval, obs_norm.count, state_norm.count)
        if self._tv_stamp != stamp:
            self._tv_stamp, self._tv_cache = stamp, {}
        missing = [b for b, ep in enumerate(episodes) if id(ep) not in self._tv_cache]
        if missing:
            rows = np.concatenate([np.arange(b * m, (b + 1) * m) for b in missing])
            tv = self._target_qtot(
                xs[:, rows, :], states[:, missing, :].reshape(T * len(missing), -1)
            ).reshape(T, len(missing))
            for k, b in enumerate(missing):
                self._tv_cache[id(episodes[b])] = tv[:, k]
        return np.stack([self._tv_cache[id(ep)] for ep in episodes], axis=1)

    def _target_qtot(self, xs, states_flat) -> np.ndarray:
        """Greedy-action Q_tot from the target nets, pure numpy."""
        T, rows_total, _ = xs.shape
        B = rows_total // self.n_agents
        row_groups = self._rows_for_net(B)
        cols = []
        for g, (net, rows) in enumerate(zip(self.target_nets, row_groups)):
            hiddens = net.gru.sequence_numpy(xs[:, rows, :])
            q = net.head.forward_numpy(hiddens.reshape(T * len(rows), self.hidden))
            q = q.reshape(-1, self.n_heads, self.n_levels)
            picked = q.max(axis=-1).sum(axis=1)
            if self.share_parameters:
                agent_qs = picked.reshape(T * B, self.n_agents)
                return self.target_mixer.forward_numpy(agent_qs, states_flat)
            cols.append(picked.reshape(T * B, 1))
        return self.target_mixer.forward_numpy(np.concatenate(cols, axis=1), states_flat)

    # -- persistence ----------------------------------------------------------

    def arrays(self) -> dict:
        out = {}
        groups = [("agent", self.agent_nets), ("target", self.target_nets)]
        for name, nets in groups:
            for k, net in enumerate(nets):
                for i, a in enumerate(net.state_arrays()):
                    out[f"{name}{k}.{i}"] = a
        for name, mod in (("mixer", self.mixer), ("target_mixer", self.target_mixer)):
            for i, a in enumerate([p.data for p in mod.parameters()]):
                out[f"{name}.{i}"] = a
        return out

    def load_arrays(self, arrays: dict):
        for name, nets in (("agent", self.agent_nets), ("target", self.target_nets)):
            for k, net in enumerate(nets):
                n = len(net.parameters())
                net.load_arrays([arrays[f"{name}{k}.{i}"] for i in range(n)])
        for name, mod in (("mixer", self.mixer), ("target_mixer", self.target_mixer)):
            params = mod.parameters()
            for i, p in enumerate(params):
                p.data = np.asarray(arrays[f"{name}.{i}"], dtype=float).copy()


class QmixPolicy(ControlPolicy):
    """Decentralized execution: each balancer acts from its own history only."""

    decision_kind = "rl"
    name = "qmix"

    def __init__(self, learner: QmixLearner, levels=ACTION_LEVELS, mode: str = "train"):
        self.learner = learner
        self.levels = list(levels)
        self.mode = mode
        self.epsilon = 0.0
        self.norm = RunningNorm(learner.obs_dim)
        self.state_norm = RunningNorm(learner.state_dim)
        self._rng = None
        self._hiddens = None
        self._last_idx = None
        self.log = None

    def needs_observations(self) -> bool:
        return True

    def start_episode(self, scenario, seed: int):
        from ..engine import stream_rng

        if self.learner.n_agents != scenario.lb_count:
            raise ValueError(
                f"learner built for {self.learner.n_agents} agents, scenario has {scenario.lb_count}"
            )
        self._rng = stream_rng(seed, "policy")
        self._hiddens = [self.learner.initial_hidden() for _ in range(self.learner.n_agents)]
        self._last_idx = [
            np.zeros(self.learner.n_heads, dtype=int) for _ in range(self.learner.n_agents)
        ]
        self.log = []

    def control(self, step_index, now, observations, global_state):
        gstate = np.asarray(global_state)
        if self.mode == "train":
            self.state_norm.update(gstate)
        weights, step_rec = [], []
        eps = self.epsilon if self.mode == "train" else 0.0
        for i in range(self.learner.n_agents):
            raw = observation_features(observations[i])
            if self.mode == "train":
                self.norm.update(raw)
            x = self.learner.compose_input(self.norm.normalize(raw), self._last_idx[i], i)
            idx, self._hiddens[i] = self.learner.act(i, x, self._hiddens[i], self._rng, eps)
            step_rec.append((raw, self._last_idx[i].copy(), idx))
            self._last_idx[i] = idx
            weights.append([self.levels[k] for k in idx])
        self.log.append((step_rec, gstate))
        return weights

    def build_episode(self, rewards) -> Episode:
        T, m = len(self.log), self.learner.n_agents
        obs = np.stack([[rec[i][0] for i in range(m)] for rec, _ in self.log])
        prev = np.stack([[rec[i][1] for i in range(m)] for rec, _ in self.log])
        actions = np.stack([[rec[i][2] for i in range(m)] for rec, _ in self.log])
        states = np.stack([g for _, g in self.log])
        return Episode(
            obs=obs,
            prev_actions=prev,
            actions=actions,
            rewards=np.asarray(rewards[:T]),
            states=states,
        )
