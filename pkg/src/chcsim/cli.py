"""Experiment runner: single runs, capacity sweeps, trace generation,
model validation, and the greedy-vs-optimal oracle report.

Every command reads one YAML config (see :mod:`chcsim.config`) and
prints CSV with a fixed, documented schema; rendering plots is left to
external tools. Exit code is 0 iff the command completed without
errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import random
import sys

from .config import (
    ConfigError,
    build_catalog,
    build_cost,
    build_topology,
    load_config,
    load_workload,
    parse_capacity,
)
from .model import (
    Architecture,
    CachePlacement,
    ModelValidationError,
    Topology,
    model_errors,
    validate_model,
)
from .objective import delay_saving
from .placement import (
    InstanceTooLargeError,
    brute_force_optimal,
    femto_x_placement,
    most_popular_placement,
    mpc_ex_placement,
    pcd_greedy,
    random_small_instance,
)
from .replacement import make_policy
from .sim import SimulationError, run_simulation
from .trace import TraceFormatError, generate_zipf_trace, save_trace

RUN_COLUMNS = (
    "mode",
    "policy",
    "total_capacity_bytes",
    "hit_ratio",
    "avg_latency_ms",
    "backhaul_bytes",
    "hits_local",
    "hits_cloud",
    "hits_neighbor",
    "misses",
)

PLACEMENT_CHOICES = ("pcd", "mpcex", "femtox", "popular", "empty")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _emit(lines: list[str], out_path: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _build_placement(name, topology, catalog, cost, mode) -> CachePlacement:
    name = name.strip().lower()
    if name == "pcd":
        return pcd_greedy(topology, catalog, cost, mode)
    if name == "mpcex":
        return mpc_ex_placement(topology, catalog, cost)
    if name == "femtox":
        return femto_x_placement(topology, catalog, cost)
    if name == "popular":
        return most_popular_placement(topology, catalog)
    if name == "empty":
        return CachePlacement(topology, catalog)
    raise ConfigError(f"unknown placement {name!r} (choices: {', '.join(PLACEMENT_CHOICES)})")


def _catalog_bytes_hint(cfg: dict) -> int | None:
    sec = cfg.get("catalog") or {}
    num_files = sec.get("num_files")
    size = sec.get("file_size_bytes")
    if num_files is None or size is None or isinstance(size, (list, tuple)):
        return None
    return int(num_files) * parse_capacity(size)


def _execute_run(
    cfg: dict,
    mode_name: str,
    policy_name: str,
    placement_name: str,
    total_capacity: int | None = None,
    trace_override: str | None = None,
    split_override: float | None = None,
    seed_override: int | None = None,
) -> dict:
    """Full pipeline for one run: model, placement, policy, replay."""
    run_sec = cfg.get("run") or {}
    if seed_override is not None:
        cfg = dict(cfg)
        workload = dict(cfg.get("workload") or {})
        workload["seed"] = seed_override
        cfg["workload"] = workload
    mode = Architecture.parse(mode_name)
    base_topology = build_topology(cfg, total_override=total_capacity)
    full_trace = load_workload(cfg, base_topology, trace_override)

    split = float(split_override if split_override is not None else run_sec.get("split", 0.0))
    if split > 0.0:
        estimation_trace, replay_trace = full_trace.split(split)
    else:
        estimation_trace = replay_trace = full_trace

    catalog = build_catalog(cfg, estimation_trace)
    if full_trace.max_file() > catalog.num_files:
        raise ConfigError(
            f"trace references file {full_trace.max_file()} beyond catalog "
            f"size {catalog.num_files}"
        )
    cost = build_cost(cfg, base_topology.num_cells)
    model = validate_model(base_topology, cost, catalog)

    effective_topology = base_topology.for_architecture(mode)
    placement = _build_placement(placement_name, effective_topology, catalog, cost, mode)
    policy = make_policy(
        policy_name,
        rcr_popularity=run_sec.get("rcr_popularity", "prior"),
        rcr_decay=float(run_sec.get("rcr_decay", 0.999)),
    )
    result = run_simulation(replay_trace, placement, policy, model, mode)
    m = result.metrics
    return {
        "mode": mode.value,
        "policy": policy.name,
        "total_capacity_bytes": placement.topology.total_capacity,
        "hit_ratio": m.hit_ratio,
        "avg_latency_ms": m.avg_latency_ms,
        "backhaul_bytes": m.backhaul_bytes,
        "hits_local": m.hits_local,
        "hits_cloud": m.hits_cloud,
        "hits_neighbor": m.hits_neighbor,
        "misses": m.misses,
    }


def _row_text(row: dict) -> str:
    return ",".join(_fmt(row[col]) for col in RUN_COLUMNS)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    run_sec = cfg.get("run") or {}
    row = _execute_run(
        cfg,
        args.mode or run_sec.get("mode", "chc"),
        args.policy or run_sec.get("policy", "static"),
        args.placement or run_sec.get("placement", "pcd"),
        trace_override=args.trace,
        split_override=args.split,
        seed_override=args.seed,
    )
    _emit([",".join(RUN_COLUMNS), _row_text(row)], args.out)
    return 0


def _sweep_worker(payload) -> dict:
    cfg, capacity, mode_name, policy_name, placement_name, trace, split, seed = payload
    return _execute_run(
        cfg,
        mode_name,
        policy_name,
        placement_name,
        total_capacity=capacity,
        trace_override=trace,
        split_override=split,
        seed_override=seed,
    )


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    run_sec = cfg.get("run") or {}
    catalog_bytes = _catalog_bytes_hint(cfg)
    capacities = [parse_capacity(tok, catalog_bytes) for tok in args.capacities.split(",")]
    modes = (args.mode or run_sec.get("mode", "chc")).split(",")
    policies = (args.policy or run_sec.get("policy", "static")).split(",")
    placement = args.placement or run_sec.get("placement", "pcd")

    combos = [
        (cfg, capacity, mode, policy, placement, args.trace, args.split, args.seed)
        for capacity in capacities
        for mode in modes
        for policy in policies
    ]
    workers = args.workers or int(run_sec.get("workers", 0)) or os.cpu_count() or 1
    if workers > 1 and len(combos) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, combos))
    else:
        rows = [_sweep_worker(payload) for payload in combos]
    _emit([",".join(RUN_COLUMNS)] + [_row_text(r) for r in rows], args.out)
    return 0


def cmd_gen_trace(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    workload = cfg.get("workload") or {}
    catalog = cfg.get("catalog") or {}
    topology = cfg.get("topology") or {}

    num_requests = args.requests or workload.get("num_requests")
    num_files = args.files or catalog.get("num_files")
    if num_requests is None or num_files is None:
        raise ConfigError("gen-trace needs --requests and --files (or a config giving them)")
    exponent = args.exponent if args.exponent is not None else workload.get("zipf_exponent", 0.8)
    num_cells = int(args.cells or topology.get("num_cells", 1))
    seed = args.seed if args.seed is not None else workload.get("seed", 0)
    if not args.out:
        raise ConfigError("gen-trace needs --out")

    shell = Topology(num_cells, (0,) * num_cells, 0, (0,) * num_cells)
    trace = generate_zipf_trace(int(num_requests), int(num_files), float(exponent), shell, int(seed))
    save_trace(trace, args.out)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    topology = build_topology(cfg)
    estimation_trace = None
    if (cfg.get("catalog") or {}).get("popularity") == "trace" or (
        cfg.get("catalog") or {}
    ).get("num_files") is None:
        estimation_trace = load_workload(cfg, topology, args.trace)
    catalog = build_catalog(cfg, estimation_trace)
    cost = build_cost(cfg, topology.num_cells)
    errors = model_errors(topology, cost, catalog)
    if errors:
        _emit([f"invalid: {err}" for err in errors], args.out)
        return 1
    _emit(["valid"], args.out)
    return 0


def cmd_oracle(args) -> int:
    """Greedy-vs-exhaustive comparison over seeded random instances."""
    mode = Architecture.parse(args.mode or "chc")
    rng = random.Random(args.seed if args.seed is not None else 0)
    lines = ["instance,greedy_saving,optimal_saving,ratio"]
    ratios = []
    for i in range(args.instances):
        model = random_small_instance(rng)
        greedy = pcd_greedy(model.topology, model.catalog, model.cost, mode)
        optimal = brute_force_optimal(model.topology, model.catalog, model.cost, mode)
        greedy_saving = delay_saving(greedy, model.topology, model.catalog, model.cost, mode)
        optimal_saving = delay_saving(optimal, model.topology, model.catalog, model.cost, mode)
        ratio = greedy_saving / optimal_saving if optimal_saving > 0 else 1.0
        ratios.append(ratio)
        lines.append(f"{i},{_fmt(greedy_saving)},{_fmt(optimal_saving)},{_fmt(ratio)}")
    lines.append(f"min_ratio,{_fmt(min(ratios))}")
    lines.append(f"mean_ratio,{_fmt(sum(ratios) / len(ratios))}")
    _emit(lines, args.out)
    return 0 if min(ratios) >= 0.5 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chcsim",
        description="Hierarchical cooperative caching: placement, replay, metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML experiment config")
        p.add_argument("--trace", help="trace CSV path (overrides the config)")
        p.add_argument("--mode", help="chc | noncoop | edgeonly | cloudonly")
        p.add_argument("--policy", help="rcr | lru | static")
        p.add_argument("--placement", help=" | ".join(PLACEMENT_CHOICES))
        p.add_argument("--seed", type=int, help="workload seed override")
        p.add_argument("--split", type=float, help="head fraction used for estimation")
        p.add_argument("--out", help="output file (default: stdout)")

    p_run = sub.add_parser("run", help="one placement + replay, one CSV row")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="cartesian capacity x mode x policy sweep")
    common(p_sweep)
    p_sweep.add_argument(
        "--capacities",
        required=True,
        help="comma list of totals: bytes, 0.4TB, 50GB, or 5%% of catalog",
    )
    p_sweep.add_argument("--workers", type=int, default=0, help="worker processes (0 = cores)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_gen = sub.add_parser("gen-trace", help="write a synthetic Zipf trace CSV")
    common(p_gen, config_required=False)
    p_gen.add_argument("--requests", type=int, help="number of requests")
    p_gen.add_argument("--files", type=int, help="catalog size")
    p_gen.add_argument("--exponent", type=float, help="Zipf exponent (default 0.8)")
    p_gen.add_argument("--cells", type=int, help="number of cells (default 1)")
    p_gen.set_defaults(func=cmd_gen_trace)

    p_val = sub.add_parser("validate", help="check every model invariant")
    common(p_val)
    p_val.set_defaults(func=cmd_validate)

    p_oracle = sub.add_parser("oracle", help="greedy vs brute-force saving ratios")
    common(p_oracle, config_required=False)
    p_oracle.add_argument("--instances", type=int, default=200)
    p_oracle.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigError,
        ModelValidationError,
        TraceFormatError,
        SimulationError,
        InstanceTooLargeError,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
