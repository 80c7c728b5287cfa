"""Deterministic discrete-event engine and the top-level episode loop."""

from __future__ import annotations

import heapq
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import balancer, traffic as traffic_mod
from .balancer import LbState, choose_server, awcmp_probe_update, discounted_sum_count
from .config import ScenarioConfig
from .metrics import RewardState, step_reward
from .servers import Server, Flow, expected_finish_load

FLOW_ARRIVAL = 0
FLOW_COMPLETION = 1
CONTROL_STEP = 2
PROBE_TICK = 3
EPISODE_END = 4

FLOW_LOG_HEADER = "flow_id,class,lb_id,server_id,t_arrival,t_service_start,t_complete"


def stream_rng(seed: int, stream_id: str) -> np.random.Generator:
    """Independent, reproducible generator for one named random concern."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream_id.encode())])


@dataclass
class SimClock:
    now: float = 0.0
    step_index: int = 0
    step_interval: float = 0.25


class EventQueue:
    """Min-heap on (time, sequence); the sequence number makes ties deterministic."""

    def __init__(self, clock: SimClock):
        self._heap: list = []
        self._seq = 0
        self._clock = clock

    def schedule(self, time: float, kind: int, payload=None):
        if time < self._clock.now:
            raise ValueError(
                f"causality violation: event at t={time} scheduled at clock t={self._clock.now}"
            )
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        self._seq += 1

    def pop(self):
        return heapq.heappop(self._heap)

    def __len__(self):
        return len(self._heap)


@dataclass
class EpisodeResult:
    flows: list  # completed Flow records, ordered by flow id
    rewards: list  # one entry per control step plus a terminal evaluation
    saturated: bool
    steps: int
    seed: int
    policy_name: str
    assignment_counts: list  # [lb][server] flows routed
    busy_series: list  # per control step: busy workers per server
    agent_rewards: list | None = None  # per-agent series under local reward scope
    observations: list | None = None  # per step: Observation per lb (when recorded)
    actions: list | None = None  # per step: weight vector per lb (when recorded)
    global_states: list | None = None  # per step: flat true-state vector

    def fcts(self, klass: str | None = None) -> np.ndarray:
        flows = self.flows if klass is None else [f for f in self.flows if f.klass == klass]
        return np.asarray([f.fct for f in flows])


class _RewardTracker:
    """Evaluates the per-step reward under the configured scope."""

    def __init__(self, scenario: ScenarioConfig, servers, lbs):
        self.scope = scenario.reward_scope
        self.gamma = scenario.gamma
        self.servers = servers
        self.lbs = lbs
        self.state = RewardState(gamma=self.gamma)
        self.local_states = [RewardState(gamma=self.gamma) for _ in lbs]

    def _pooled_tau(self, now: float):
        tau = []
        for j in range(len(self.servers)):
            total, count = 0.0, 0
            for lb in self.lbs:
                s, c = discounted_sum_count(lb.reservoirs[j], now, self.gamma)
                total += s
                count += c
            tau.append(total / count if count else 0.0)
        return tau

    def evaluate(self, now: float):
        """Returns (global reward, per-agent rewards or None)."""
        if self.scope == "ground_truth":
            load = [expected_finish_load(s, (0.0, now + 1e-12)) for s in self.servers]
            return step_reward(self.state, load), None
        if self.scope == "local":
            locals_ = []
            for lb, st in zip(self.lbs, self.local_states):
                tau = [
                    (lambda sc: sc[0] / sc[1] if sc[1] else 0.0)(
                        discounted_sum_count(lb.reservoirs[j], now, self.gamma)
                    )
                    for j in range(lb.n)
                ]
                locals_.append(step_reward(st, tau))
            return float(np.mean(locals_)), locals_
        return step_reward(self.state, self._pooled_tau(now)), None


def run_episode(
    scenario: ScenarioConfig, policy, seed: int, record: bool = False
) -> EpisodeResult:
    """Run one episode; identical (scenario, policy, seed) runs are bit-identical."""
    scenario.validate()
    if scenario.trace_path is not None:
        trace = traffic_mod.load_trace(scenario.trace_path)
    else:
        trace = traffic_mod.generate_trace(scenario.traffic, stream_rng(seed, "traffic"))

    n, m = scenario.n_servers, scenario.lb_count
    rng_dispatch = stream_rng(seed, "dispatch")
    rng_decision = stream_rng(seed, "decision")
    rng_reservoir = stream_rng(seed, "reservoir")

    servers = [
        Server(j, spec.speed, spec.workers, spec.discipline)
        for j, spec in enumerate(scenario.servers)
    ]
    lbs = [
        LbState(i, n, scenario.reservoir_capacity, scenario.reservoir_p) for i in range(m)
    ]
    for lb, w in zip(lbs, policy.initial_weights(scenario)):
        lb.set_weights(w)
        lb.last_emitted = list(w)
    policy.start_episode(scenario, seed)

    clock = SimClock(step_interval=scenario.step_interval)
    eq = EventQueue(clock)
    for idx, (t, _, _) in enumerate(trace.entries):
        eq.schedule(t, FLOW_ARRIVAL, idx)
    steps = scenario.control_steps()
    for k in range(steps):
        eq.schedule(k * scenario.step_interval, CONTROL_STEP, k)
    if policy.decision_kind == balancer.AWCMP:
        tick = scenario.probe_period
        while tick <= scenario.episode_length + 1e-12:
            eq.schedule(tick, PROBE_TICK, None)
            tick += scenario.probe_period
    eq.schedule(scenario.episode_length, EPISODE_END, None)

    tracker = _RewardTracker(scenario, servers, lbs)
    sync_delay = scenario.sync_delay()
    needs_obs = record or policy.needs_observations()
    capacities = [s.speed * s.workers for s in servers]

    completed: list = []
    rewards: list = []
    agent_rewards: list | None = [[] for _ in range(m)] if scenario.reward_scope == "local" else None
    busy_series: list = []
    observations: list | None = [] if record else None
    actions_log: list | None = [] if record else None
    global_states: list | None = [] if record else None
    assignment_counts = [[0] * n for _ in range(m)]
    saturated = False
    arrivals_since_step = 0

    while len(eq):
        now, _, kind, payload = eq.pop()
        clock.now = now

        if kind == FLOW_ARRIVAL:
            t, w, klass = trace.entries[payload]
            flow = Flow(payload, t, w, klass)
            lb_id = traffic_mod.dispatch_to_lb(m, rng_dispatch)
            lb = lbs[lb_id]
            lb.maybe_apply_pending(now)
            sid = choose_server(lb, policy.decision_kind, rng_decision)
            flow.lb_id = lb_id
            lb.on_flow_assign(flow.flow_id, sid, now)
            assignment_counts[lb_id][sid] += 1
            for comp in servers[sid].admit(flow, now):
                eq.schedule(comp.time, FLOW_COMPLETION, (comp.server_id, comp.flow_id, comp.epoch))
            if servers[sid].in_system() > scenario.overload_cap:
                saturated = True
            arrivals_since_step += 1

        elif kind == FLOW_COMPLETION:
            sid, fid, epoch = payload
            flow, comps = servers[sid].complete(fid, now, epoch)
            for comp in comps:
                eq.schedule(comp.time, FLOW_COMPLETION, (comp.server_id, comp.flow_id, comp.epoch))
            if flow is not None:
                lbs[flow.lb_id].on_flow_end(fid, now, rng_reservoir)
                completed.append(flow)

        elif kind == CONTROL_STEP:
            clock.step_index = payload
            for lb in lbs:
                lb.maybe_apply_pending(now)
            r, locals_ = tracker.evaluate(now)
            rewards.append(r)
            if agent_rewards is not None:
                for series, val in zip(agent_rewards, locals_):
                    series.append(val)
            busy = [s.busy_workers() for s in servers]
            busy_series.append(busy)
            gstate = None
            if needs_obs:
                gstate = []
                for s, b in zip(servers, busy):
                    gstate.extend((s.speed, float(s.in_system()), float(b)))
                gstate.append(arrivals_since_step / scenario.step_interval)
            arrivals_since_step = 0
            obs = [lb.observe(now, scenario.gamma) for lb in lbs] if needs_obs else None
            new_actions = policy.control(payload, now, obs, gstate)
            if new_actions is not None:
                if len(new_actions) != m:
                    raise ValueError(
                        f"policy returned {len(new_actions)} weight vectors for {m} balancers"
                    )
                for lb, a in zip(lbs, new_actions):
                    a = [float(x) for x in a]
                    balancer._validate_weights(a, n)
                    lb.pending = (now + sync_delay, a)
                    lb.last_emitted = list(a)
            if record:
                observations.append(obs)
                actions_log.append([list(lb.last_emitted) for lb in lbs])
                global_states.append(gstate)

        elif kind == PROBE_TICK:
            utils = [s.busy_workers() / s.workers for s in servers]
            w = awcmp_probe_update(utils, capacities)
            for lb in lbs:
                lb.set_weights(w)

        elif kind == EPISODE_END:
            r, locals_ = tracker.evaluate(now)
            rewards.append(r)
            if agent_rewards is not None:
                for series, val in zip(agent_rewards, locals_):
                    series.append(val)

    completed.sort(key=lambda f: f.flow_id)
    return EpisodeResult(
        flows=completed,
        rewards=rewards,
        saturated=saturated,
        steps=steps,
        seed=seed,
        policy_name=getattr(policy, "name", policy.decision_kind),
        assignment_counts=assignment_counts,
        busy_series=busy_series,
        agent_rewards=agent_rewards,
        observations=observations,
        actions=actions_log,
        global_states=global_states,
    )


# -- flow log persistence -----------------------------------------------------


def write_flow_log(flows, path):
    with open(path, "w") as fh:
        fh.write(FLOW_LOG_HEADER + "\n")
        for f in flows:
            fh.write(
                f"{f.flow_id},{f.klass},{f.lb_id},{f.server_id},"
                f"{f.arrival:.6f},{f.t_service_start:.6f},{f.t_complete:.6f}\n"
            )


def read_flow_log(path) -> list:
    flows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != FLOW_LOG_HEADER:
            raise ValueError(f"{path}: unexpected flow log header")
        for line in fh:
            fid, klass, lb_id, sid, ta, ts, tc = line.strip().split(",")
            flows.append(
                Flow(
                    flow_id=int(fid),
                    arrival=float(ta),
                    workload=0.0,
                    klass=klass,
                    lb_id=int(lb_id),
                    server_id=int(sid),
                    t_service_start=float(ts),
                    t_complete=float(tc),
                )
            )
    return flows


def replay_completions(flows, scenario: ScenarioConfig) -> dict:
    """Re-run only the server model over a recorded assignment log.

    Returns flow_id -> completion time; used to verify episode closure."""
    servers = [
        Server(j, spec.speed, spec.workers, spec.discipline)
        for j, spec in enumerate(scenario.servers)
    ]
    heap: list = []
    seq = 0

    def push(comp):
        nonlocal seq
        heapq.heappush(heap, (comp.time, seq, comp))
        seq += 1

    done: dict = {}
    for f in sorted(flows, key=lambda f: (f.arrival, f.flow_id)):
        copy = Flow(f.flow_id, f.arrival, f.workload, f.klass, f.lb_id)
        while heap and heap[0][0] <= f.arrival:
            t, _, comp = heapq.heappop(heap)
            fin, more = servers[comp.server_id].complete(comp.flow_id, t, comp.epoch)
            if fin is not None:
                done[fin.flow_id] = t
            for c in more:
                push(c)
        for c in servers[f.server_id].admit(copy, f.arrival):
            push(c)
    while heap:
        t, _, comp = heapq.heappop(heap)
        fin, more = servers[comp.server_id].complete(comp.flow_id, t, comp.epoch)
        if fin is not None:
            done[fin.flow_id] = t
        for c in more:
            push(c)
    return done
