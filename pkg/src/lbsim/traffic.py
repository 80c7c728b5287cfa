"""Flow arrival processes: Poisson generators, a two-class synthetic trace, CSV traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass

HEAVY = "H"
LIGHT = "L"

TRACE_HEADER = ["arrival_time", "workload", "class"]


@dataclass(frozen=True)
class ExponentialWorkload:
    mean: float

    def __post_init__(self):
        if self.mean <= 0:
            raise ValueError("workload mean must be positive")

    def sample(self, rng) -> tuple[float, str]:
        return float(rng.exponential(self.mean)), HEAVY

    def expected(self) -> float:
        return self.mean


@dataclass(frozen=True)
class TwoClassWorkload:
    """Synthetic heavy/light mix standing in for a CPU-page vs static-page trace."""

    p_heavy: float = 0.5
    mean_heavy: float = 0.4
    mean_light: float = 0.02

    def __post_init__(self):
        if not 0.0 <= self.p_heavy <= 1.0:
            raise ValueError("p_heavy must lie in [0, 1]")
        if self.mean_heavy <= 0 or self.mean_light <= 0:
            raise ValueError("class means must be positive")

    def sample(self, rng) -> tuple[float, str]:
        if rng.random() < self.p_heavy:
            return float(rng.exponential(self.mean_heavy)), HEAVY
        return float(rng.exponential(self.mean_light)), LIGHT

    def expected(self) -> float:
        return self.p_heavy * self.mean_heavy + (1 - self.p_heavy) * self.mean_light


@dataclass(frozen=True)
class TrafficModel:
    rate: float  # flows per second
    workload: ExponentialWorkload | TwoClassWorkload
    duration: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("arrival rate must be positive")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")


@dataclass
class Trace:
    entries: list  # (arrival_time, workload, class), time-ordered
    duration: float
    nominal_rate: float

    def __post_init__(self):
        prev = 0.0
        for i, (t, w, _) in enumerate(self.entries):
            if w <= 0:
                raise ValueError(f"entry {i}: workload must be positive, got {w}")
            if t < prev:
                raise ValueError(f"entry {i}: arrival times not sorted ({t} after {prev})")
            prev = t

    def __len__(self):
        return len(self.entries)


def generate_trace(model: TrafficModel, rng) -> Trace:
    """Poisson arrivals (exponential gaps at 1/rate) with per-flow workload draws."""
    entries = []
    t = float(rng.exponential(1.0 / model.rate))
    while t < model.duration:
        w, klass = model.workload.sample(rng)
        entries.append((t, w, klass))
        t += float(rng.exponential(1.0 / model.rate))
    return Trace(entries=entries, duration=model.duration, nominal_rate=model.rate)


def save_trace(trace: Trace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for t, w, klass in trace.entries:
            writer.writerow([f"{t:.6f}", f"{w:.6f}", klass])


def load_trace(path) -> Trace:
    """Read a trace CSV; rejects bad workloads and out-of-order rows (never sorts)."""
    entries = []
    prev = 0.0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                t, w = float(row[0]), float(row[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
            klass = row[2].strip()
            if klass not in (HEAVY, LIGHT):
                raise ValueError(f"{path}:{lineno}: class must be H or L, got {klass!r}")
            if w <= 0:
                raise ValueError(f"{path}:{lineno}: workload must be positive, got {w}")
            if t < prev:
                raise ValueError(f"{path}:{lineno}: arrival time {t} out of order")
            prev = t
            entries.append((t, w, klass))
    duration = entries[-1][0] if entries else 0.0
    rate = len(entries) / duration if duration > 0 else 0.0
    return Trace(entries=entries, duration=duration, nominal_rate=rate)


def dispatch_to_lb(m: int, rng) -> int:
    """Edge-router fan-out: uniform i.i.d. choice over the m balancers."""
    if m < 1:
        raise ValueError("need at least one load balancer")
    if m == 1:
        return 0
    return int(rng.integers(m))
