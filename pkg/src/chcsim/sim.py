"""Deterministic trace-replay engine.

Each request is routed to the cheapest visible source, recorded in the
metrics, and only then handed to the replacement policy; policy actions
are applied before the next request. Identical inputs produce
bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    CLOUD_INDEX,
    ORIGIN_INDEX,
    Architecture,
    CachePlacement,
    CostModel,
    Model,
    Request,
)
from .objective import PlacementEvaluator, ServingDecision, serving_cost
from .replacement import ReplacementPolicy, StaticPolicy
from .trace import RequestTrace


class SimulationError(ValueError):
    """Malformed trace entry or broken accounting during replay."""


@dataclass(frozen=True)
class CellMetrics:
    """Per-cell slice of the replay metrics."""

    requests: int
    hits_local: int
    hits_cloud: int
    hits_neighbor: int
    misses: int
    hit_ratio: float
    avg_latency_ms: float
    backhaul_bytes: int


@dataclass(frozen=True)
class Metrics:
    """Aggregated replay metrics.

    ``hits_local + hits_cloud + hits_neighbor + misses == total_requests``;
    ``hit_ratio == 1 - misses/total_requests``; backhaul counts only the
    bytes fetched from the origin on misses; ``avg_latency_ms`` averages
    the per-request serving latency over all requests.
    """

    total_requests: int
    hits_local: int
    hits_cloud: int
    hits_neighbor: int
    misses: int
    hit_ratio: float
    avg_latency_ms: float
    backhaul_bytes: int
    per_cell: tuple[CellMetrics, ...]

    def to_dict(self) -> dict:
        return {
            "total_requests": self.total_requests,
            "hits_local": self.hits_local,
            "hits_cloud": self.hits_cloud,
            "hits_neighbor": self.hits_neighbor,
            "misses": self.misses,
            "hit_ratio": self.hit_ratio,
            "avg_latency_ms": self.avg_latency_ms,
            "backhaul_bytes": self.backhaul_bytes,
        }


@dataclass(frozen=True)
class SimulationResult:
    metrics: Metrics
    final_placement: CachePlacement


def route_request(
    placement: CachePlacement,
    request: Request,
    cost: CostModel,
    mode: Architecture,
) -> ServingDecision:
    """Route one request against a fixed placement (see
    :func:`chcsim.objective.serving_cost`)."""
    return serving_cost(placement, request.cell, request.file, cost, mode)


def _finalize_cell(requests, local, cloud, neighbor, miss, lat_sum, backhaul) -> CellMetrics:
    return CellMetrics(
        requests=requests,
        hits_local=local,
        hits_cloud=cloud,
        hits_neighbor=neighbor,
        misses=miss,
        hit_ratio=(1.0 - miss / requests) if requests else 0.0,
        avg_latency_ms=(lat_sum / requests) if requests else 0.0,
        backhaul_bytes=backhaul,
    )


def run_simulation(
    trace: RequestTrace,
    initial_placement: CachePlacement,
    policy: ReplacementPolicy,
    model: Model,
    mode: Architecture,
    *,
    check_invariants: bool = False,
) -> SimulationResult:
    """Replay a trace: route each request, record metrics, then apply
    the policy's replacement actions.

    The initial placement is copied, never mutated. With
    ``check_invariants`` the metric accounting identities and capacity
    feasibility are re-verified after every request (slow; meant for
    tests).
    """
    topology = initial_placement.topology
    catalog = model.catalog
    num_cells = topology.num_cells
    num_files = catalog.num_files
    if num_cells != model.topology.num_cells:
        raise SimulationError(
            f"placement has {num_cells} cells but the model has {model.topology.num_cells}"
        )

    evaluator = PlacementEvaluator(
        topology, catalog, model.cost, mode, placement=initial_placement.copy()
    )
    policy.bind(evaluator)
    static = isinstance(policy, StaticPolicy)

    seqs = trace.seqs.tolist()
    cells = trace.cells.tolist()
    files = trace.files.tolist()
    users = trace.users
    sizes = catalog.file_sizes.tolist()
    route = evaluator.route

    req_c = [0] * (num_cells + 1)
    local_c = [0] * (num_cells + 1)
    cloud_c = [0] * (num_cells + 1)
    neigh_c = [0] * (num_cells + 1)
    miss_c = [0] * (num_cells + 1)
    lat_c = [0.0] * (num_cells + 1)
    back_c = [0] * (num_cells + 1)
    total = 0
    hits_local = 0
    hits_cloud = 0
    hits_neighbor = 0
    misses = 0
    lat_sum = 0.0
    backhaul = 0
    prev_seq = None

    for i in range(len(seqs)):
        cell = cells[i]
        file = files[i]
        if not 1 <= cell <= num_cells or not 1 <= file <= num_files:
            raise SimulationError(f"malformed trace entry at seq {seqs[i]}")
        src, latency = route(cell, file)
        total += 1
        req_c[cell] += 1
        lat_sum += latency
        lat_c[cell] += latency
        if src == cell:
            hits_local += 1
            local_c[cell] += 1
        elif src == CLOUD_INDEX:
            hits_cloud += 1
            cloud_c[cell] += 1
        elif src == ORIGIN_INDEX:
            misses += 1
            miss_c[cell] += 1
            backhaul += sizes[file - 1]
            back_c[cell] += sizes[file - 1]
        else:
            hits_neighbor += 1
            neigh_c[cell] += 1

        if not static:
            for action in policy.on_request(seqs[i], cell, file, src, latency):
                idx = action.cache.index
                for victim in action.evict:
                    evaluator.remove(victim, idx)
                evaluator.insert(action.insert, idx)

        if check_invariants:
            if prev_seq is not None and seqs[i] <= prev_seq:
                raise SimulationError(f"seq not increasing at seq {seqs[i]}")
            prev_seq = seqs[i]
            _check_accounting(
                total,
                hits_local,
                hits_cloud,
                hits_neighbor,
                misses,
                backhaul,
                (req_c, local_c, cloud_c, neigh_c, miss_c, back_c),
                evaluator,
            )

    per_cell = tuple(
        _finalize_cell(
            req_c[r], local_c[r], cloud_c[r], neigh_c[r], miss_c[r], lat_c[r], back_c[r]
        )
        for r in range(1, num_cells + 1)
    )
    metrics = Metrics(
        total_requests=total,
        hits_local=hits_local,
        hits_cloud=hits_cloud,
        hits_neighbor=hits_neighbor,
        misses=misses,
        hit_ratio=(1.0 - misses / total) if total else 0.0,
        avg_latency_ms=(lat_sum / total) if total else 0.0,
        backhaul_bytes=backhaul,
        per_cell=per_cell,
    )
    return SimulationResult(metrics, evaluator.placement)


def _check_accounting(total, local, cloud, neighbor, miss, backhaul, cell_tallies, evaluator):
    req_c, local_c, cloud_c, neigh_c, miss_c, back_c = cell_tallies
    if local + cloud + neighbor + miss != total:
        raise SimulationError("hit/miss partition broken")
    if (sum(req_c), sum(local_c), sum(cloud_c), sum(neigh_c), sum(miss_c), sum(back_c)) != (
        total,
        local,
        cloud,
        neighbor,
        miss,
        backhaul,
    ):
        raise SimulationError("per-cell tallies disagree with totals")
    placement = evaluator.placement
    for idx in range(evaluator.num_cells + 1):
        if placement.used_bytes(idx) > evaluator.topology.capacity_of(idx):
            raise SimulationError(f"capacity exceeded in cache {idx}")
