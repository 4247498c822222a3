"""Command-line front end.

    tsrt tree     --config scenario.json [--seed S] [--out FILE]
    tsrt run      --config scenario.json [--seed S] [--out FILE] [--mode paper|corrected] [--trace FILE]
    tsrt sweep    --config scenario.json --n-min 1 --n-max 30 [--format csv|json] [--out FILE]
    tsrt evaluate --config scenario.json [--out FILE]

Exit codes: 0 success, 1 invalid input, 2 runtime failure (unreachable nodes,
synchronization failure). See README for the scenario keys.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .analysis import error_stats, sweep_m_vs_n
from .clockmodel import ClockModelError, ErrorModel, LocalClock
from .engine import SimConfig, SimulationError, Simulator
from .hts import CorrectionMode, HtsProtocol
from .neteval import EvalError, SyncParams, evaluate
from .topology import NetworkGraph, TopologyError, linear_network, load_edge_list, star_network
from .treebuild import TreeBuilder

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class ConfigError(ValueError):
    pass


_TOP_KEYS = {"topology", "sim", "sync", "error_model", "clocks", "correction_mode",
             "rounds", "beacon_spacing", "settle", "eps_max_report"}
_CLOCK_KEYS = {"offset_std", "skew_std"}


@dataclass
class Scenario:
    graph: NetworkGraph | None
    sim: SimConfig
    sync: SyncParams | None
    error_model: ErrorModel | None
    correction_mode: CorrectionMode = CorrectionMode.CORRECTED
    rounds: int = 1
    beacon_spacing: float = 0.4
    settle: float = 0.0
    clock_offset_std: float = 0.0
    clock_skew_std: float = 0.0
    base_dir: Path = field(default=Path("."))

    def initial_clocks(self):
        rng = np.random.default_rng([self.sim.seed, 1])
        n = self.graph.node_count
        offsets = rng.normal(0.0, 1.0, n) * self.clock_offset_std
        skews = rng.normal(0.0, 1.0, n) * self.clock_skew_std
        return [LocalClock(float(o), float(s)) for o, s in zip(offsets, skews)]


def _section(raw: dict, name: str, cls, required: bool):
    if name not in raw:
        if required:
            raise ConfigError(f"missing config key: {name}")
        return None
    body = raw[name]
    if not isinstance(body, dict):
        raise ConfigError(f"config key {name} must be an object")
    allowed = {f.name for f in fields(cls)}
    for key in body:
        if key not in allowed:
            raise ConfigError(f"unknown config key: {name}.{key}")
    try:
        return cls(**body)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    except (EvalError, ClockModelError, SimulationError, ValueError) as exc:
        raise ConfigError(f"{name}.{exc}" if name in ("sync",) else f"{name}: {exc}") from None


def parse_topology(spec, base_dir: Path) -> NetworkGraph:
    if not isinstance(spec, str):
        raise ConfigError("topology must be `linear:<B>`, `star:<k>` or an edge-list path")
    kind, _, arg = spec.partition(":")
    try:
        if kind == "linear" and arg:
            return linear_network(int(arg))
        if kind == "star" and arg:
            return star_network(int(arg))
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from None
    path = Path(spec)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"topology file not found: {spec}")
    return load_edge_list(path)


def load_scenario(path, need=(), overrides=None) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key: {key}")
    overrides = overrides or {}
    base_dir = path.parent

    sim_raw = dict(raw.get("sim", {}))
    if overrides.get("seed") is not None:
        sim_raw["seed"] = overrides["seed"]
    sim = _section({"sim": sim_raw}, "sim", SimConfig, False)

    graph = None
    if "topology" in need or "topology" in raw:
        if "topology" not in raw:
            raise ConfigError("missing config key: topology")
        try:
            graph = parse_topology(raw["topology"], base_dir)
        except TopologyError as exc:
            raise ConfigError(f"topology: {exc}") from None

    sync = _section(raw, "sync", SyncParams, "sync" in need)
    model = _section(raw, "error_model", ErrorModel, "error_model" in need)

    clocks = raw.get("clocks", {})
    for key in clocks:
        if key not in _CLOCK_KEYS:
            raise ConfigError(f"unknown config key: clocks.{key}")
    mode = overrides.get("mode") or raw.get("correction_mode", "corrected")
    try:
        mode = CorrectionMode.parse(mode)
    except ValueError:
        raise ConfigError(f"correction_mode: expected paper or corrected, got {mode!r}") from None
    rounds = raw.get("rounds", 1)
    if not isinstance(rounds, int) or rounds < 1:
        raise ConfigError(f"rounds: must be a positive integer, got {rounds!r}")
    scenario = Scenario(
        graph=graph, sim=sim, sync=sync, error_model=model, correction_mode=mode,
        rounds=rounds, beacon_spacing=float(raw.get("beacon_spacing", 0.4)),
        settle=float(raw.get("settle", 0.0)),
        clock_offset_std=float(clocks.get("offset_std", 0.0)),
        clock_skew_std=float(clocks.get("skew_std", 0.0)), base_dir=base_dir,
    )
    if scenario.beacon_spacing < 0 or scenario.settle < 0:
        raise ConfigError("beacon_spacing and settle must be >= 0")
    return scenario


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out.parent, prefix=f".{out.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, out)


def cmd_tree(args) -> int:
    sc = load_scenario(args.config, need=("topology",), overrides={"seed": args.seed})
    sim = Simulator(sc.graph, sc.sim)
    builder = TreeBuilder(sim)
    builder.initiate_flood()
    sim.run()
    tree = builder.state
    _emit(tree.dump(), args.out)
    missing = sc.graph.node_count - len(tree.accepted())
    if missing:
        print(f"warning: {missing} node(s) never joined the tree", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_run(args) -> int:
    sc = load_scenario(args.config, need=("topology",),
                       overrides={"seed": args.seed, "mode": args.mode})
    n_beacons = sc.sync.n_beacons if sc.sync else 1
    sim = Simulator(sc.graph, sc.sim, clocks=sc.initial_clocks())
    builder = TreeBuilder(sim)
    builder.initiate_flood()
    sim.run()
    proto = HtsProtocol(sim, builder.state, n_beacons=n_beacons, mode=sc.correction_mode,
                        spacing=sc.beacon_spacing)
    report = proto.run_network_sync(sc.rounds, settle=sc.settle)
    text = report.to_text()
    if report.nodes:
        eps = sc.sync.eps_max if sc.sync else float("inf")
        stats = error_stats(report, eps)
        text += "# level count mean std max\n"
        for level, st in stats.per_level.items():
            text += f"{level} {st.count} {st.mean!r} {st.std!r} {st.max!r}\n"
        text += f"# max_abs_error {stats.overall_max!r}\n# exceedance {stats.exceedance!r}\n"
    _emit(text, args.out)
    if args.trace:
        _emit(sim.trace.to_text(), args.trace)
    if not report.all_synchronized:
        unsynced = sum(not e.synchronized for e in report.nodes)
        print(f"error: {unsynced} node(s) not synchronized", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.n_min < 1 or args.n_min > args.n_max:
        raise ConfigError(f"need 1 <= n-min <= n-max, got {args.n_min}..{args.n_max}")
    sc = load_scenario(args.config, need=("sync", "error_model"), overrides={"seed": args.seed})
    result = sweep_m_vs_n(sc.sync, sc.error_model, range(args.n_min, args.n_max + 1))
    _emit(result.to_json() if args.format == "json" else result.to_csv(), args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    sc = load_scenario(args.config, need=("sync", "error_model"), overrides={"seed": args.seed})
    r = evaluate(sc.sync, sc.error_model)
    lines = [
        f"mode {r.mode.value}",
        f"n_beacons {r.n_beacons}",
        f"sigma_eps {r.sigma_eps!r}",
        f"sigma_o {r.sigma_o!r}",
        f"sigma_s {r.sigma_s!r}",
        f"tau_max {r.tau_max!r}",
        f"tau {r.tau!r}",
        f"M {r.m_per_unit_time!r}",
    ]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsrt", description="TSRT clock synchronization simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--seed", type=int, default=None, help="override sim.seed")
        p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("tree", help="flood the network and dump the tree")
    common(p)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("run", help="build the tree, run HTS rounds, report errors")
    common(p)
    p.add_argument("--mode", choices=["paper", "corrected"], default=None)
    p.add_argument("--trace", default=None, help="write the event trace here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="M versus N for TSRT and TPSN")
    common(p)
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=30)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="mode, tau_max, tau and M for the configured parameters")
    common(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, TopologyError, EvalError, ClockModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
