"""Scenario configuration: dataclasses, named presets, TOML persistence."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .servers import FIFO_WORKERS, PROCESSOR_SHARING
from .traffic import ExponentialWorkload, TwoClassWorkload, TrafficModel

REWARD_SCOPES = ("global", "ground_truth", "local")


@dataclass
class ServerSpec:
    speed: float
    workers: int
    group: str = "default"
    discipline: str = FIFO_WORKERS


@dataclass
class ScenarioConfig:
    servers: list
    lb_count: int
    traffic: TrafficModel | None = None
    trace_path: str | None = None
    episode_length: float = 60.0
    step_interval: float = 0.25
    sync_base_delay: float = 0.0
    sync_per_agent_delay: float = 0.0
    reward_scope: str = "global"
    overload_cap: int = 100_000
    reservoir_capacity: int = 10_000
    reservoir_p: float = 0.05
    gamma: float = 0.9
    probe_period: float = 1.0

    def validate(self):
        if not self.servers:
            raise ValueError("scenario needs at least one server")
        for s in self.servers:
            if s.speed <= 0 or s.workers < 1:
                raise ValueError("server speed must be positive, workers >= 1")
            if s.discipline not in (FIFO_WORKERS, PROCESSOR_SHARING):
                raise ValueError(f"unknown discipline {s.discipline!r}")
        if self.lb_count < 1:
            raise ValueError("scenario needs at least one load balancer")
        if self.traffic is None and self.trace_path is None:
            raise ValueError("scenario needs a traffic model or a trace path")
        if self.episode_length <= 0 or self.step_interval <= 0:
            raise ValueError("episode length and step interval must be positive")
        if self.sync_base_delay < 0 or self.sync_per_agent_delay < 0:
            raise ValueError("synchronization delays must be non-negative")
        if self.reward_scope not in REWARD_SCOPES:
            raise ValueError(f"reward scope must be one of {REWARD_SCOPES}")
        if self.overload_cap < 1:
            raise ValueError("overload cap must be positive")
        return self

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    def capacity(self) -> float:
        """Aggregate service capacity in workload-units per second."""
        return sum(s.speed * s.workers for s in self.servers)

    def static_weights(self) -> list:
        """Heuristic weights proportional to provisioned CPU (server speed)."""
        return [s.speed for s in self.servers]

    def sync_delay(self) -> float:
        """Action-application delay modeling centralized-training synchronization."""
        return self.sync_base_delay + self.sync_per_agent_delay * self.lb_count

    def control_steps(self) -> int:
        return int(round(self.episode_length / self.step_interval))


def moderate_preset(utilization: float = 0.85, episode_length: float = 60.0) -> ScenarioConfig:
    """Seven heterogeneous servers, two balancers, heavy/light synthetic traffic."""
    servers = [ServerSpec(1.0, 2, "small") for _ in range(4)] + [
        ServerSpec(2.0, 4, "big") for _ in range(3)
    ]
    workload = TwoClassWorkload()
    capacity = sum(s.speed * s.workers for s in servers)
    rate = utilization * capacity / workload.expected()
    return ScenarioConfig(
        servers=servers,
        lb_count=2,
        traffic=TrafficModel(rate=rate, workload=workload, duration=episode_length),
        episode_length=episode_length,
    )


def large_preset(utilization: float = 0.85, episode_length: float = 30.0) -> ScenarioConfig:
    """Twenty-four servers, six balancers, exponential CPU-bound Poisson traffic."""
    servers = [ServerSpec(1.0, 4, "small") for _ in range(12)] + [
        ServerSpec(2.0, 8, "big") for _ in range(12)
    ]
    workload = ExponentialWorkload(mean=0.2)
    capacity = sum(s.speed * s.workers for s in servers)
    rate = utilization * capacity / workload.expected()
    return ScenarioConfig(
        servers=servers,
        lb_count=6,
        traffic=TrafficModel(rate=rate, workload=workload, duration=episode_length),
        episode_length=episode_length,
    )


def reduced_preset(utilization: float = 0.85, episode_length: float = 60.0) -> ScenarioConfig:
    """Four servers (speeds 1,1,2,2), two balancers; small enough to train quickly."""
    servers = [ServerSpec(1.0, 2, "small") for _ in range(2)] + [
        ServerSpec(2.0, 4, "big") for _ in range(2)
    ]
    workload = TwoClassWorkload()
    capacity = sum(s.speed * s.workers for s in servers)
    rate = utilization * capacity / workload.expected()
    return ScenarioConfig(
        servers=servers,
        lb_count=2,
        traffic=TrafficModel(rate=rate, workload=workload, duration=episode_length),
        episode_length=episode_length,
    )


PRESETS = {"moderate": moderate_preset, "large": large_preset, "reduced": reduced_preset}


def preset(name: str, **kwargs) -> ScenarioConfig:
    try:
        return PRESETS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; valid: {sorted(PRESETS)}") from None


# -- TOML persistence ---------------------------------------------------------


def to_dict(cfg: ScenarioConfig) -> dict:
    d = asdict(cfg)
    d["servers"] = [asdict(s) if not isinstance(s, dict) else s for s in cfg.servers]
    if cfg.traffic is not None:
        w = cfg.traffic.workload
        if isinstance(w, ExponentialWorkload):
            wd = {"kind": "exponential", "mean": w.mean}
        else:
            wd = {
                "kind": "two_class",
                "p_heavy": w.p_heavy,
                "mean_heavy": w.mean_heavy,
                "mean_light": w.mean_light,
            }
        d["traffic"] = {"rate": cfg.traffic.rate, "duration": cfg.traffic.duration, **wd}
    else:
        del d["traffic"]
    if cfg.trace_path is None:
        del d["trace_path"]
    return {"scenario": d}


def from_dict(data: dict) -> ScenarioConfig:
    d = dict(data["scenario"])
    servers = [ServerSpec(**s) for s in d.pop("servers")]
    traffic = None
    if "traffic" in d:
        t = dict(d.pop("traffic"))
        kind = t.pop("kind")
        rate, duration = t.pop("rate"), t.pop("duration")
        if kind == "exponential":
            workload = ExponentialWorkload(**t)
        elif kind == "two_class":
            workload = TwoClassWorkload(**t)
        else:
            raise ValueError(f"unknown workload kind {kind!r}")
        traffic = TrafficModel(rate=rate, workload=workload, duration=duration)
    return ScenarioConfig(servers=servers, traffic=traffic, **d).validate()


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot serialize {type(v)} to TOML")


def _emit_table(name: str, table: dict, out: list):
    scalars = {k: v for k, v in table.items() if not isinstance(v, (dict, list))}
    if scalars or not table:
        out.append(f"[{name}]")
        for k, v in scalars.items():
            out.append(f"{k} = {_toml_value(v)}")
        out.append("")
    for k, v in table.items():
        if isinstance(v, dict):
            _emit_table(f"{name}.{k}", v, out)
        elif isinstance(v, list):
            for item in v:
                out.append(f"[[{name}.{k}]]")
                for kk, vv in item.items():
                    out.append(f"{kk} = {_toml_value(vv)}")
                out.append("")


def dumps(cfg: ScenarioConfig) -> str:
    out: list = []
    for name, table in to_dict(cfg).items():
        _emit_table(name, table, out)
    return "\n".join(out) + "\n"


def save(cfg: ScenarioConfig, path):
    with open(path, "w") as fh:
        fh.write(dumps(cfg))


def load(path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        return from_dict(tomllib.load(fh))
