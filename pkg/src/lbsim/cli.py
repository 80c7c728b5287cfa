"""Command-line front end: simulate, train, evaluate, bench-decision, gen-trace."""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import balancer, config as config_mod
from .agents.train import RunConfig, load_policy, train
from .balancer import HEURISTICS, LbState, choose_server
from .engine import run_episode, stream_rng, write_flow_log
from .metrics import jct_summary
from .nets import load_checkpoint
from .traffic import generate_trace, save_trace

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class CliError(ValueError):
    """Validation failure surfaced to the user with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# -- shared plumbing ----------------------------------------------------------


def _scenario_from_args(args) -> config_mod.ScenarioConfig:
    if args.config and args.preset:
        raise CliError("--config and --preset are mutually exclusive")
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise CliError(f"config file not found: {path}")
        return config_mod.load(path)
    if args.preset:
        return config_mod.preset(args.preset)
    raise CliError("one of --config or --preset is required")


def _seed_list(args) -> list:
    if args.seeds:
        try:
            lo, hi = args.seeds.split("..")
            lo, hi = int(lo), int(hi)
        except ValueError:
            raise CliError(f"--seeds expects N..M, got {args.seeds!r}") from None
        if hi < lo:
            raise CliError("--seeds range is empty")
        return list(range(lo, hi + 1))
    return [args.seed]


def _prepare_out(path, force: bool) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise CliError(f"output directory {out} is not empty; pass --force to reuse it")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_policy(args, scenario):
    """Returns (policy, scenario); checkpoints may override the scenario."""
    name = args.policy
    if name in HEURISTICS:
        from .policies import make_policy

        return make_policy(name), scenario
    if name in ("qmix", "isac", "ssac"):
        if not args.checkpoint:
            raise CliError(f"policy {name!r} needs --checkpoint")
        policy, ck_scenario, run = load_policy(args.checkpoint, mode="eval")
        if run.agent != name:
            raise CliError(
                f"checkpoint holds a {run.agent!r} policy, not {name!r}"
            )
        return policy, scenario if scenario is not None else ck_scenario
    valid = list(HEURISTICS) + ["qmix", "isac", "ssac"]
    raise CliError(f"unknown policy {name!r}; valid: {valid}")


def _write_summary_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "class", "count", "mean", "std", "p90", "p99"])
        writer.writerows(rows)


def _summary_rows(method, flows):
    rows = []
    for klass, s in jct_summary(flows).items():
        rows.append(
            [method, klass, s.count, f"{s.mean:.6f}", f"{s.std:.6f}", f"{s.p90:.6f}", f"{s.p99:.6f}"]
        )
    return rows


def _write_cdf(path, summary):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fct", "fraction"])
        for v, q in summary.cdf:
            writer.writerow([f"{v:.6f}", f"{q:.6f}"])


def _write_series(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _persist_run(out: Path, scenario, result):
    config_mod.save(scenario, out / "scenario.toml")
    write_flow_log(result.flows, out / "flows.csv")
    _write_summary_csv(out / "jct_summary.csv", _summary_rows("run", result.flows))
    _write_cdf(out / "cdf.csv", jct_summary(result.flows)["all"])
    n = scenario.n_servers
    _write_series(
        out / "busy_workers.csv",
        ["step"] + [f"server_{j}" for j in range(n)],
        [[i] + list(b) for i, b in enumerate(result.busy_series)],
    )
    _write_series(
        out / "rewards.csv",
        ["step", "reward"],
        [[i, f"{r:.9f}"] for i, r in enumerate(result.rewards)],
    )


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.config is None and args.preset is None and args.checkpoint:
        scenario = None  # fall back to the scenario stored in the checkpoint
    else:
        scenario = _scenario_from_args(args)
    policy, scenario = _resolve_policy(args, scenario)
    if scenario is None:
        raise CliError("one of --config or --preset is required")
    scenario.validate()
    seeds = _seed_list(args)
    out = _prepare_out(args.out, args.force)
    all_flows = []
    for seed in seeds:
        result = run_episode(scenario, policy, seed=seed)
        run_dir = out / f"seed_{seed}"
        run_dir.mkdir(exist_ok=True)
        _persist_run(run_dir, scenario, result)
        all_flows.extend(result.flows)
        done = [f for f in result.flows if f.t_complete >= 0]
        mean = np.mean([f.fct for f in done]) if done else float("nan")
        sat = "  [saturated]" if result.saturated else ""
        print(f"seed {seed}: {len(done)} flows, mean FCT {mean:.4f}{sat}")
    _write_summary_csv(out / "aggregate.csv", _summary_rows(policy.name, all_flows))
    print(f"results in {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = RunConfig(
        agent=args.agent,
        episodes=args.episodes,
        seed=args.seed,
        lr=args.lr,
        hidden=args.hidden,
    )
    out = _prepare_out(args.out, args.force)
    policy, start = None, 0
    if args.checkpoint:
        ck = Path(args.checkpoint)
        if not ck.exists():
            raise CliError(f"checkpoint not found: {ck}")
        policy, scenario, ck_run = load_policy(ck, mode="train")
        if ck_run.agent != args.agent:
            raise CliError(f"checkpoint holds a {ck_run.agent!r} agent, not {args.agent!r}")
        _, meta = load_checkpoint(ck)
        start = int(meta.get("episodes_done", 0))
        print(f"resuming from episode {start}")
    else:
        scenario = _scenario_from_args(args)
    train(run, scenario, out_dir=out, policy=policy, start_episode=start)
    print(f"checkpoint and learning curve in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scenario = _scenario_from_args(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise CliError("--methods list is empty")
    seeds = _seed_list(args)
    out = _prepare_out(args.out, args.force)
    config_mod.save(scenario, out / "scenario.toml")
    rows = []
    for method in methods:
        ns = argparse.Namespace(policy=method, checkpoint=args.checkpoint)
        policy, method_scenario = _resolve_policy(ns, scenario)
        flows = []
        for seed in seeds:
            result = run_episode(method_scenario, policy, seed=seed)
            flows.extend(result.flows)
        rows.extend(_summary_rows(method, flows))
        _write_cdf(out / f"cdf_{method}.csv", jct_summary(flows)["all"])
        mean = next(r for r in rows if r[0] == method and r[1] == "all")[3]
        print(f"{method:>6}: mean FCT {mean} over {len(seeds)} seeds")
    _write_summary_csv(out / "comparison.csv", rows)
    print(f"comparison table in {out / 'comparison.csv'}")
    return EXIT_OK


def cmd_bench_decision(args) -> int:
    n = args.servers
    calls = args.calls
    rng = stream_rng(args.seed, "decision")
    qs = [[int(v) for v in row] for row in rng.integers(0, 50, size=(256, n))]
    weights = [1.0 + float(v) for v in rng.random(n)]

    def bench(kind, w):
        lb = LbState(lb_id=0, n=n)
        lb.set_weights(list(w))
        t0 = time.perf_counter()
        done = 0
        while done < calls:
            lb.q = qs[done % 256]
            for _ in range(512):
                choose_server(lb, kind, rng)
            done += 512
        dt = time.perf_counter() - t0
        return done / dt

    print(f"{'policy':>8}  {'decisions/s':>12}  {'ns/decision':>12}")
    results = {}
    for kind in HEURISTICS:
        rate = bench(kind, weights)
        results[kind] = rate
        print(f"{kind:>8}  {rate:12.0f}  {1e9 / rate:12.1f}")
    rate = bench(balancer.RL_WEIGHTED, weights)
    results["rl"] = rate
    print(f"{'rl':>8}  {rate:12.0f}  {1e9 / rate:12.1f}")
    if args.out:
        _write_series(
            args.out, ["policy", "decisions_per_s"],
            [[k, f"{v:.0f}"] for k, v in results.items()],
        )
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    scenario = _scenario_from_args(args)
    if scenario.traffic is None:
        raise CliError("scenario has no traffic model to sample from")
    out = Path(args.out)
    if out.exists() and not args.force:
        raise CliError(f"{out} exists; pass --force to overwrite")
    trace = generate_trace(scenario.traffic, stream_rng(args.seed, "traffic"))
    save_trace(trace, out)
    print(f"{len(trace.entries)} arrivals written to {out}")
    return EXIT_OK


# -- argument wiring ----------------------------------------------------------


def _add_scenario_args(p):
    p.add_argument("--config", help="scenario TOML file")
    p.add_argument("--preset", help="named scenario: moderate | large | reduced")


def _add_seed_args(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", help="inclusive seed range N..M (overrides --seed)")


def build_parser() -> _Parser:
    parser = _Parser(prog="lbsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run episodes and persist result files")
    _add_scenario_args(p)
    _add_seed_args(p)
    p.add_argument("--policy", default="sed")
    p.add_argument("--checkpoint", help="trained policy checkpoint (.npz)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a weight-setting agent")
    _add_scenario_args(p)
    p.add_argument("--agent", default="qmix", choices=("qmix", "isac", "ssac"))
    p.add_argument("--episodes", type=int, default=72)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", help="resume training from this checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compare methods on a common scenario")
    _add_scenario_args(p)
    _add_seed_args(p)
    p.add_argument("--methods", required=True, help="comma-separated policy names")
    p.add_argument("--checkpoint", help="checkpoint for RL methods")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench-decision", help="micro-benchmark per-flow decisions")
    p.add_argument("--servers", type=int, default=24)
    p.add_argument("--calls", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional CSV report path")
    p.set_defaults(func=cmd_bench_decision)

    p = sub.add_parser("gen-trace", help="sample a traffic trace to CSV")
    _add_scenario_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - boundary between library and shell
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
