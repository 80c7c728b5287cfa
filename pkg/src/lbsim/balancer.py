"""Load-balancer state, partial-observation bookkeeping, and per-flow decision rules."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

ECMP = "ecmp"
WCMP = "wcmp"
AWCMP = "awcmp"
LSQ = "lsq"
SED = "sed"
RL_WEIGHTED = "rl"

HEURISTICS = (ECMP, WCMP, AWCMP, LSQ, SED)
POLICY_KINDS = HEURISTICS + (RL_WEIGHTED,)

# discrete weight levels available to learning agents
ACTION_LEVELS = (1.0, 1.2, 1.4, 1.6, 1.8, 2.0)

AWCMP_WEIGHT_FLOOR = 0.01


class ReservoirBuffer:
    """Fixed-size buffer of (timestamp, duration) samples kept by probabilistic overwrite.

    Each offered sample is accepted with probability p; an accepted sample
    overwrites a uniformly random slot. Slots start as (0, 0) placeholders and
    are never grown. Durations are strictly positive, so a zero duration marks
    an untouched slot.
    """

    __slots__ = ("K", "p", "ts", "values")

    def __init__(self, capacity: int = 10000, p: float = 0.05):
        if capacity < 1 or not (0.0 < p <= 1.0):
            raise ValueError("need capacity >= 1 and 0 < p <= 1")
        self.K = capacity
        self.p = p
        self.ts = np.zeros(capacity)
        self.values = np.zeros(capacity)

    def insert(self, t: float, value: float, rng) -> bool:
        if rng.random() < self.p:
            idx = int(rng.integers(self.K))
            self.ts[idx] = t
            self.values[idx] = value
            return True
        return False

    def live_samples(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.values > 0.0
        return self.ts[mask], self.values[mask]


def duration_stats(buf: ReservoirBuffer, now: float, gamma: float = 0.9):
    """(mean, std, p90, discounted_mean, discounted_p90) over live samples.

    Discounting weighs each sample by gamma**(now - t_k); the discounted mean
    divides by the live sample count. An all-placeholder buffer yields zeros.
    """
    ts, vals = buf.live_samples()
    if vals.size == 0:
        return (0.0, 0.0, 0.0, 0.0, 0.0)
    disc = gamma ** (now - ts) * vals
    return (
        float(vals.mean()),
        float(vals.std()),
        float(np.percentile(vals, 90)),
        float(disc.sum() / vals.size),
        float(np.percentile(disc, 90)),
    )


def discounted_sum_count(buf: ReservoirBuffer, now: float, gamma: float = 0.9):
    """(sum of discounted durations, live count) for pooling across balancers."""
    ts, vals = buf.live_samples()
    if vals.size == 0:
        return 0.0, 0
    return float((gamma ** (now - ts) * vals).sum()), int(vals.size)


def reservoir_retention_expectation(rate: float, p: float, capacity: int, t: float) -> float:
    """Closed-form retained-sample expectation lam*p*((K-p)/K)**(lam*T).

    Caveat: this expression is dimensionally odd (the survival factor mixes the
    per-slot scale K with the acceptance probability p) and decays much faster
    than observed buffers; it is exposed for reference only. Validate reservoir
    behavior against an empirical simulation instead.
    """
    return rate * p * ((capacity - p) / capacity) ** (rate * t)


@dataclass
class Observation:
    """Per-balancer view handed to agents at a control step."""

    q: list  # on-going flow count per server, as seen by this LB
    stats: list  # per server: (mean, std, p90, discounted_mean, discounted_p90)
    last_action: list  # previous weight vector


@dataclass
class LbState:
    lb_id: int
    n: int
    reservoir_capacity: int = 10000
    reservoir_p: float = 0.05
    q: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    reservoirs: list = field(default_factory=list)
    flow_table: dict = field(default_factory=dict)  # flow_id -> (server_id, t_arrival)
    pending: tuple | None = None  # (apply_time, weights) awaiting sync delay
    last_emitted: list = field(default_factory=list)
    _cumw: list = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one server")
        self.q = [0] * self.n
        self.weights = [1.0] * self.n
        self.last_emitted = list(self.weights)
        self.reservoirs = [
            ReservoirBuffer(self.reservoir_capacity, self.reservoir_p) for _ in range(self.n)
        ]
        self._refresh_cumw()

    def _refresh_cumw(self):
        acc, cum = 0.0, []
        for w in self.weights:
            acc += w
            cum.append(acc)
        self._cumw = cum

    def on_flow_assign(self, flow_id: int, server_id: int, now: float):
        if flow_id in self.flow_table:
            raise RuntimeError(f"lb {self.lb_id}: duplicate flow id {flow_id}")
        if not 0 <= server_id < self.n:
            raise ValueError(f"lb {self.lb_id}: server {server_id} out of range")
        self.q[server_id] += 1
        self.flow_table[flow_id] = (server_id, now)

    def on_flow_end(self, flow_id: int, now: float, rng):
        try:
            server_id, t_arrival = self.flow_table.pop(flow_id)
        except KeyError:
            raise RuntimeError(f"lb {self.lb_id}: end of unknown flow id {flow_id}") from None
        self.q[server_id] -= 1
        self.reservoirs[server_id].insert(now, now - t_arrival, rng)

    def set_weights(self, weights):
        weights = [float(w) for w in weights]
        _validate_weights(weights, self.n)
        self.weights = weights
        self._refresh_cumw()

    def apply_action(self, action, levels=ACTION_LEVELS):
        """Install an agent weight vector; entries must come from the discrete set."""
        action = [float(a) for a in action]
        _validate_weights(action, self.n)
        for a in action:
            if not any(math.isclose(a, lvl) for lvl in levels):
                raise ValueError(
                    f"lb {self.lb_id}: weight {a} not in discrete action set {levels}"
                )
        self.weights = action
        self._refresh_cumw()

    def maybe_apply_pending(self, now: float):
        if self.pending is not None and self.pending[0] <= now:
            _, weights = self.pending
            self.pending = None
            self.apply_action(weights)

    def observe(self, now: float, gamma: float = 0.9) -> Observation:
        stats = [duration_stats(buf, now, gamma) for buf in self.reservoirs]
        return Observation(q=list(self.q), stats=stats, last_action=list(self.last_emitted))


def _validate_weights(weights, n: int):
    if len(weights) != n:
        raise ValueError(f"weight vector has length {len(weights)}, expected {n}")
    for w in weights:
        if not (w > 0 and math.isfinite(w)):
            raise ValueError(f"weights must be positive and finite, got {w}")


def choose_server(lb: LbState, policy: str, rng) -> int:
    """Pick a server for a newly arrived flow. Ties break toward the lowest index."""
    n = lb.n
    if policy == ECMP:
        return int(rng.integers(n))
    if policy in (WCMP, AWCMP):
        cum = lb._cumw
        return bisect_right(cum, rng.random() * cum[-1])
    q = lb.q
    if policy == LSQ:
        best, best_q = 0, q[0]
        for j in range(1, n):
            if q[j] < best_q:
                best, best_q = j, q[j]
        return best
    if policy in (SED, RL_WEIGHTED):
        a = lb.weights
        best, best_v = 0, (q[0] + 1) / a[0]
        for j in range(1, n):
            v = (q[j] + 1) / a[j]
            if v < best_v:
                best, best_v = j, v
        return best
    raise ValueError(f"unknown policy {policy!r}; valid: {POLICY_KINDS}")


def awcmp_probe_update(utilizations, capacities, floor: float = AWCMP_WEIGHT_FLOOR):
    """Probe-driven weights: spare fraction times capacity, normalized to mean 1."""
    if len(utilizations) != len(capacities):
        raise ValueError("utilization/capacity length mismatch")
    for u in utilizations:
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"utilization {u} outside [0, 1]")
    raw = [max(floor, 1.0 - u) * c for u, c in zip(utilizations, capacities)]
    mean = sum(raw) / len(raw)
    return [w / mean for w in raw]
