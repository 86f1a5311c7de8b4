"""Experiment configuration: one YAML file describing the topology,
cost model, catalog, workload, and run options.

Schema (defaults in parentheses)::

    topology:
      num_cells: 4
      users_total: 19777          # or users_per_cell: [u1, u2, ...]
      edge_capacity_bytes: 5e10   # scalar or per-cell list, with
      cloud_capacity_bytes: 2e11  #   cloud_capacity_bytes; or instead:
      total_capacity_bytes: 4e11  # split via cloud_ratio
      cloud_ratio: 4              # cloud = ratio x each edge cache (4)
    cost:
      cloud_to_edge_ms: 20        # scalar or per-cell list
      origin_ms: 100
    catalog:
      num_files: 77414            # omit to infer from the trace
      file_size_bytes: 20e6       # scalar or per-file list
      popularity: zipf            # zipf | trace | [p1, p2, ...]
      zipf_exponent: 0.8
    workload:
      trace_path: trace.csv       # or synthetic:
      num_requests: 1000000
      zipf_exponent: 0.8
      seed: 1
    run:
      mode: chc                   # chc | noncoop | edgeonly | cloudonly
      placement: pcd              # pcd | mpcex | femtox | popular | empty
      policy: static              # rcr | lru | static
      rcr_popularity: prior       # prior | empirical
      rcr_decay: 0.999
      split: 0.0                  # head fraction for popularity estimation
      workers: 0                  # sweep parallelism; 0 = all cores
"""

from __future__ import annotations

import numpy as np
import yaml

from .model import Catalog, CostModel, Model, Topology
from .trace import RequestTrace, estimate_popularity, generate_zipf_trace, parse_trace, zipf_popularity

DEFAULT_CLOUD_RATIO = 4.0

_UNIT_BYTES = {
    "B": 1,
    "KB": 10**3,
    "MB": 10**6,
    "GB": 10**9,
    "TB": 10**12,
    "PB": 10**15,
}


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return cfg


def _section(cfg: dict, name: str, required: bool = True) -> dict:
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing config section {name!r}")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return sec


def parse_capacity(text, catalog_bytes: int | None = None) -> int:
    """Parse a capacity: plain bytes (``4e11``), a unit suffix
    (``0.4TB``, ``50GB``), or a catalog share (``5%``)."""
    if isinstance(text, (int, float)):
        return int(text)
    raw = str(text).strip()
    if raw.endswith("%"):
        if catalog_bytes is None:
            raise ConfigError("percentage capacity needs a sized catalog")
        return int(float(raw[:-1]) / 100.0 * catalog_bytes)
    for unit in sorted(_UNIT_BYTES, key=len, reverse=True):
        if raw.upper().endswith(unit):
            return int(float(raw[: -len(unit)]) * _UNIT_BYTES[unit])
    try:
        return int(float(raw))
    except ValueError:
        raise ConfigError(f"cannot parse capacity {text!r}") from None


def split_capacity(total: int, num_cells: int, cloud_ratio: float) -> tuple[int, tuple[int, ...]]:
    """Split a total budget into (cloud, per-edge) capacities with the
    cloud ``cloud_ratio`` times each edge cache; the cloud absorbs
    rounding so the total is preserved exactly."""
    if total < 0:
        raise ConfigError("total capacity must be >= 0")
    edge = int(total / (num_cells + cloud_ratio))
    cloud = total - num_cells * edge
    return cloud, (edge,) * num_cells


def build_topology(cfg: dict, total_override: int | None = None) -> Topology:
    sec = _section(cfg, "topology")
    num_cells = int(sec.get("num_cells", 0))
    if num_cells < 1:
        raise ConfigError("topology.num_cells must be >= 1")

    if "users_per_cell" in sec:
        users = tuple(int(u) for u in sec["users_per_cell"])
        if len(users) != num_cells:
            raise ConfigError("topology.users_per_cell length != num_cells")
    elif "users_total" in sec:
        base, extra = divmod(int(sec["users_total"]), num_cells)
        users = tuple(base + (1 if r < extra else 0) for r in range(num_cells))
    else:
        raise ConfigError("topology needs users_total or users_per_cell")

    ratio = float(sec.get("cloud_ratio", DEFAULT_CLOUD_RATIO))
    if total_override is not None:
        cloud, edges = split_capacity(int(total_override), num_cells, ratio)
    elif "total_capacity_bytes" in sec:
        cloud, edges = split_capacity(
            parse_capacity(sec["total_capacity_bytes"]), num_cells, ratio
        )
    elif "edge_capacity_bytes" in sec and "cloud_capacity_bytes" in sec:
        raw = sec["edge_capacity_bytes"]
        if isinstance(raw, (list, tuple)):
            edges = tuple(parse_capacity(v) for v in raw)
            if len(edges) != num_cells:
                raise ConfigError("topology.edge_capacity_bytes length != num_cells")
        else:
            edges = (parse_capacity(raw),) * num_cells
        cloud = parse_capacity(sec["cloud_capacity_bytes"])
    else:
        raise ConfigError(
            "topology needs total_capacity_bytes or edge_capacity_bytes + cloud_capacity_bytes"
        )
    return Topology(num_cells, edges, cloud, users)


def build_cost(cfg: dict, num_cells: int) -> CostModel:
    sec = _section(cfg, "cost")
    if "cloud_to_edge_ms" not in sec or "origin_ms" not in sec:
        raise ConfigError("cost needs cloud_to_edge_ms and origin_ms")
    raw = sec["cloud_to_edge_ms"]
    if isinstance(raw, (list, tuple)):
        d = tuple(float(v) for v in raw)
        if len(d) != num_cells:
            raise ConfigError("cost.cloud_to_edge_ms length != num_cells")
    else:
        d = (float(raw),) * num_cells
    return CostModel(d, float(sec["origin_ms"]))


def build_catalog(cfg: dict, estimation_trace: RequestTrace | None = None) -> Catalog:
    sec = _section(cfg, "catalog")
    num_files = sec.get("num_files")
    if num_files is None:
        if estimation_trace is None or len(estimation_trace) == 0:
            raise ConfigError("catalog.num_files missing and no trace to infer it from")
        num_files = estimation_trace.max_file()
    num_files = int(num_files)

    sizes_raw = sec.get("file_size_bytes")
    if sizes_raw is None:
        raise ConfigError("catalog.file_size_bytes is required")
    if isinstance(sizes_raw, (list, tuple)):
        if len(sizes_raw) != num_files:
            raise ConfigError("catalog.file_size_bytes length != num_files")
        sizes = np.asarray([parse_capacity(v) for v in sizes_raw], dtype=np.int64)
    else:
        sizes = np.full(num_files, parse_capacity(sizes_raw), dtype=np.int64)

    pop_raw = sec.get("popularity", "zipf")
    if isinstance(pop_raw, (list, tuple)):
        popularity = np.asarray(pop_raw, dtype=np.float64)
        if popularity.shape[0] != num_files:
            raise ConfigError("catalog.popularity length != num_files")
    elif pop_raw == "zipf":
        popularity = zipf_popularity(num_files, float(sec.get("zipf_exponent", 0.8)))
    elif pop_raw == "trace":
        if estimation_trace is None or len(estimation_trace) == 0:
            raise ConfigError("catalog.popularity=trace needs a nonempty trace")
        popularity = estimate_popularity(estimation_trace, num_files)
    else:
        raise ConfigError(f"unknown catalog.popularity {pop_raw!r}")
    return Catalog(sizes, popularity)


def load_workload(cfg: dict, topology: Topology, trace_override=None) -> RequestTrace:
    sec = _section(cfg, "workload")
    path = trace_override if trace_override is not None else sec.get("trace_path")
    if path is not None:
        return parse_trace(path, topology)
    if "num_requests" not in sec:
        raise ConfigError("workload needs trace_path or num_requests (synthetic)")
    catalog_sec = _section(cfg, "catalog")
    if catalog_sec.get("num_files") is None:
        raise ConfigError("synthetic workload needs catalog.num_files")
    return generate_zipf_trace(
        int(sec["num_requests"]),
        int(catalog_sec["num_files"]),
        float(sec.get("zipf_exponent", 0.8)),
        topology,
        int(sec.get("seed", 0)),
    )


# --- model serialization (round-trips popularity bit-exactly) ---


def model_to_dict(model: Model) -> dict:
    return {
        "topology": {
            "num_cells": model.topology.num_cells,
            "edge_capacity_bytes": list(model.topology.edge_capacities),
            "cloud_capacity_bytes": model.topology.cloud_capacity,
            "users_per_cell": list(model.topology.users_per_cell),
        },
        "cost": {
            "cloud_to_edge_ms": list(model.cost.cloud_to_edge_ms),
            "origin_ms": model.cost.origin_ms,
        },
        "catalog": {
            "num_files": model.catalog.num_files,
            "file_size_bytes": model.catalog.file_sizes.tolist(),
            "popularity": model.catalog.popularity.tolist(),
        },
    }


def model_from_dict(data: dict) -> Model:
    topo = data["topology"]
    cost = data["cost"]
    cat = data["catalog"]
    return Model(
        Topology(
            topo["num_cells"],
            tuple(topo["edge_capacity_bytes"]),
            topo["cloud_capacity_bytes"],
            tuple(topo["users_per_cell"]),
        ),
        CostModel(tuple(cost["cloud_to_edge_ms"]), cost["origin_ms"]),
        Catalog(
            np.asarray(cat["file_size_bytes"], dtype=np.int64),
            np.asarray(cat["popularity"], dtype=np.float64),
        ),
    )


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(model_to_dict(model), fh, sort_keys=True)


def load_model(path) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(yaml.safe_load(fh))
