"""Policy bindings: how a run turns names/checkpoints into per-flow decision rules."""

from __future__ import annotations

from . import balancer


class ControlPolicy:
    """Interface consumed by the episode loop.

    `decision_kind` selects the per-flow rule in `balancer.choose_server`;
    `control` is called once per control step and may return a new weight
    vector per balancer (or None to keep the current ones)."""

    decision_kind: str = balancer.SED
    name: str = "policy"

    def needs_observations(self) -> bool:
        return False

    def start_episode(self, scenario, seed: int):
        pass

    def initial_weights(self, scenario):
        return [[1.0] * scenario.n_servers for _ in range(scenario.lb_count)]

    def control(self, step_index: int, now: float, observations, global_state):
        return None


class HeuristicPolicy(ControlPolicy):
    """ECMP/WCMP/AWCMP/LSQ/SED; weight-free or fixed/probe-updated weights."""

    def __init__(self, kind: str, weights=None):
        if kind not in balancer.HEURISTICS:
            raise ValueError(f"unknown heuristic {kind!r}; valid: {balancer.HEURISTICS}")
        self.decision_kind = kind
        self.name = kind
        self._weights = weights  # static override; defaults to capacity-proportional

    def initial_weights(self, scenario):
        if self.decision_kind in (balancer.ECMP, balancer.LSQ):
            w = [1.0] * scenario.n_servers
        elif self._weights is not None:
            w = list(self._weights)
        else:
            w = scenario.static_weights()
        return [list(w) for _ in range(scenario.lb_count)]


def make_policy(name: str, weights=None) -> HeuristicPolicy:
    return HeuristicPolicy(name, weights=weights)
