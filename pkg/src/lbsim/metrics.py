"""Scoring math: product fairness, makespan, the step reward, JCT summaries."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


def fairness(load) -> float:
    """Linear-product fairness: prod_j l_j / max(l). 1 iff all entries equal.

    An all-zero vector is treated as perfectly balanced (startup convention)."""
    l = np.asarray(load, dtype=float)
    if l.size == 0:
        raise ValueError("empty load vector")
    if (l < 0).any():
        raise ValueError("load entries must be non-negative")
    m = l.max()
    if m == 0.0:
        return 1.0
    return float(np.prod(l / m))


def makespan(load) -> float:
    l = np.asarray(load, dtype=float)
    if l.size == 0:
        raise ValueError("empty load vector")
    return float(l.max())


@dataclass
class RewardState:
    """Carries the previous step's discounted per-server means between rewards."""

    gamma: float = 0.9
    step: int = 0
    tau_prev: np.ndarray | None = None


def step_reward(state: RewardState, tau_now) -> float:
    """Fairness of the exponentially blended discounted durations.

    First step scores tau_now directly; later steps score
    (1 - gamma) * tau_prev + gamma * tau_now. Advances `state`."""
    tau_now = np.asarray(tau_now, dtype=float)
    if state.step == 0:
        r = fairness(tau_now)
    else:
        if state.tau_prev.shape != tau_now.shape:
            raise ValueError("per-server vector length changed between steps")
        r = fairness((1.0 - state.gamma) * state.tau_prev + state.gamma * tau_now)
    state.tau_prev = tau_now
    state.step += 1
    return r


@dataclass
class JctSummary:
    count: int
    mean: float
    std: float  # population std
    p90: float
    p99: float
    cdf: list  # (value, cumulative fraction) at 200 evenly spaced quantiles


def summarize_fcts(fcts, cdf_points: int = 200) -> JctSummary:
    x = np.asarray(fcts, dtype=float)
    if x.size == 0:
        raise ValueError("no completed flows to summarize")
    qs = np.linspace(0.0, 1.0, cdf_points)
    vals = np.quantile(x, qs)
    return JctSummary(
        count=int(x.size),
        mean=float(x.mean()),
        std=float(x.std()),
        p90=float(np.percentile(x, 90)),
        p99=float(np.percentile(x, 99)),
        cdf=[(float(v), float(q)) for v, q in zip(vals, qs)],
    )


def jct_summary(flows) -> dict:
    """Per-class and overall completion-time summaries for finished flows."""
    flows = [f for f in flows if f.t_complete >= 0]
    if not flows:
        raise ValueError("no completed flows")
    out = {"all": summarize_fcts([f.fct for f in flows])}
    for klass in sorted({f.klass for f in flows}):
        out[klass] = summarize_fcts([f.fct for f in flows if f.klass == klass])
    return out


@dataclass
class Prop1Verdict:
    sufficiency_holds: bool
    has_non_fair_min_makespan: bool
    instances_checked: int
    counterexample: tuple | None = None


def prop1_oracle(n: int, jobs: int, speeds, tol: float = 1e-12) -> Prop1Verdict:
    """Brute-force check that fairness-maximizing assignments minimize makespan.

    Enumerates every assignment of `jobs` unit jobs onto n servers with the
    given speeds, compares the fairness-optimal set against the makespan
    optimum, and reports whether some makespan-optimal assignment is *not*
    fairness-optimal (sufficient but not necessary).

    When jobs < n every assignment leaves a server empty, so F = 0 for all of
    them and the fairness objective expresses no preference at all. Sufficiency
    is vacuous in that regime (the underlying argument assumes every server
    carries positive load) and is reported as holding."""
    if n > 4 or jobs > 12:
        raise ValueError("instance too large for enumeration (need n <= 4, jobs <= 12)")
    if len(speeds) != n:
        raise ValueError("speeds length mismatch")
    best_f, min_mk = -1.0, float("inf")
    records = []
    for counts in itertools.product(range(jobs + 1), repeat=n):
        if sum(counts) != jobs:
            continue
        load = [c / v for c, v in zip(counts, speeds)]
        f, mk = fairness(load), makespan(load)
        records.append((counts, f, mk))
        best_f = max(best_f, f)
        min_mk = min(min_mk, mk)
    sufficiency = True
    counterexample = None
    non_fair_min = False
    degenerate = best_f <= tol
    for counts, f, mk in records:
        if not degenerate and f >= best_f - tol and mk > min_mk + tol:
            sufficiency = False
            counterexample = counts
        if mk <= min_mk + tol and f < best_f - tol:
            non_fair_min = True
    return Prop1Verdict(
        sufficiency_holds=sufficiency,
        has_non_fair_min_makespan=non_fair_min,
        instances_checked=len(records),
        counterexample=counterexample,
    )
