"""Application server model: worker slots, FIFO queueing or processor sharing."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

FIFO_WORKERS = "fifo_workers"
PROCESSOR_SHARING = "processor_sharing"

# remaining-workload tolerance when a processor-sharing completion fires
_PS_EPS = 1e-9


class SaturationError(Exception):
    """Raised internally when a server exceeds the configured overload cap."""


@dataclass(slots=True)
class Flow:
    flow_id: int
    arrival: float
    workload: float
    klass: str  # "H" or "L"
    lb_id: int = -1
    server_id: int = -1
    t_service_start: float = -1.0
    t_complete: float = -1.0

    @property
    def fct(self) -> float:
        return self.t_complete - self.arrival


@dataclass(slots=True)
class Completion:
    """A (re)scheduled completion; `epoch` invalidates stale processor-sharing events."""

    time: float
    server_id: int
    flow_id: int
    epoch: int


@dataclass
class Server:
    server_id: int
    speed: float
    workers: int
    discipline: str = FIFO_WORKERS
    active: dict = field(default_factory=dict)  # flow_id -> Flow
    queue: deque = field(default_factory=deque)
    assigned_log: list = field(default_factory=list)  # (t_assign, workload)
    # processor-sharing bookkeeping
    remaining: dict = field(default_factory=dict)  # flow_id -> workload left
    epoch: int = 0
    _last_update: float = 0.0

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError(f"server {self.server_id}: speed must be positive")
        if self.workers < 1:
            raise ValueError(f"server {self.server_id}: need at least one worker")
        if self.discipline not in (FIFO_WORKERS, PROCESSOR_SHARING):
            raise ValueError(f"unknown discipline {self.discipline!r}")

    def in_system(self) -> int:
        return len(self.active) + len(self.queue)

    def busy_workers(self) -> int:
        if self.discipline == FIFO_WORKERS:
            return len(self.active)
        return min(len(self.active), self.workers)

    def admit(self, flow: Flow, now: float) -> list[Completion]:
        """Accept a newly assigned flow; returns completions to schedule."""
        flow.server_id = self.server_id
        self.assigned_log.append((now, flow.workload))
        if self.discipline == FIFO_WORKERS:
            if len(self.active) < self.workers:
                return [self._start_service(flow, now)]
            self.queue.append(flow)
            return []
        # processor sharing: all active flows share capacity equally
        self._advance_sharing(now)
        flow.t_service_start = now
        self.active[flow.flow_id] = flow
        self.remaining[flow.flow_id] = flow.workload
        return self._resched_sharing(now)

    def complete(self, flow_id: int, now: float, epoch: int) -> tuple[Flow | None, list[Completion]]:
        """Handle a fired completion event; returns (finished flow, new completions).

        A stale processor-sharing event (epoch mismatch) returns (None, [])."""
        if self.discipline == PROCESSOR_SHARING and epoch != self.epoch:
            return None, []
        if flow_id not in self.active:
            raise RuntimeError(
                f"server {self.server_id}: completion for non-active flow {flow_id}"
            )
        if self.discipline == FIFO_WORKERS:
            flow = self.active.pop(flow_id)
            flow.t_complete = now
            if self.queue:
                return flow, [self._start_service(self.queue.popleft(), now)]
            return flow, []
        self._advance_sharing(now)
        if self.remaining[flow_id] > _PS_EPS:
            raise RuntimeError(
                f"server {self.server_id}: flow {flow_id} completion fired with "
                f"{self.remaining[flow_id]:.3e} workload left"
            )
        flow = self.active.pop(flow_id)
        del self.remaining[flow_id]
        flow.t_complete = now
        return flow, self._resched_sharing(now)

    def _start_service(self, flow: Flow, now: float) -> Completion:
        flow.t_service_start = now
        self.active[flow.flow_id] = flow
        return Completion(now + flow.workload / self.speed, self.server_id, flow.flow_id, 0)

    def _advance_sharing(self, now: float):
        dt = now - self._last_update
        if dt > 0 and self.active:
            rate = self.speed / len(self.active)
            for fid in self.remaining:
                self.remaining[fid] -= dt * rate
        self._last_update = now

    def _resched_sharing(self, now: float) -> list[Completion]:
        self.epoch += 1
        if not self.active:
            return []
        fid = min(self.remaining, key=lambda f: (self.remaining[f], f))
        t = now + max(self.remaining[fid], 0.0) * len(self.active) / self.speed
        return [Completion(t, self.server_id, fid, self.epoch)]


def expected_finish_load(server: Server, window: tuple[float, float]) -> float:
    """Ground-truth load: total workload assigned in [t0, tn) over processing speed."""
    t0, tn = window
    return sum(w for t, w in server.assigned_log if t0 <= t < tn) / server.speed
