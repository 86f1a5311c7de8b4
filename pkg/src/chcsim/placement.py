"""Offline cache-placement algorithms.

``pcd_greedy`` is the proactive distribution phase: start from empty
caches and repeatedly insert the feasible (file, cache) pair with the
largest marginal delay saving until no pair with positive gain remains.
Lazy evaluation keeps stale gains in a max-heap as upper bounds, which
submodularity makes exact: the output is identical to the naive scan.

``brute_force_optimal`` exhaustively enumerates capacity-feasible
placements on small instances and is the oracle the greedy's 1/2
guarantee is checked against.

The remaining functions build the comparison baselines: single-tier
placements at equal total capacity, most-popular fill with and without
cloud/edge exclusion, and the cooperative edge-only scheme.
"""

from __future__ import annotations

import heapq
import math
import random

from .model import (
    CLOUD_INDEX,
    Architecture,
    CachePlacement,
    Catalog,
    CostModel,
    Model,
    Topology,
    validate_model,
)
from .objective import PlacementEvaluator

DEFAULT_ENUMERATION_BUDGET = 500_000


class InstanceTooLargeError(ValueError):
    """Instance exceeds the exhaustive-enumeration budget."""


def pcd_greedy(
    topology: Topology,
    catalog: Catalog,
    cost: CostModel,
    mode: Architecture,
    *,
    lazy: bool = True,
) -> CachePlacement:
    """Greedy placement by maximum marginal delay saving.

    Ties break by (file id, cache index), lowest first. With uniform
    file sizes the per-cache capacities form a partition matroid, so the
    result saves at least half the optimal delay saving.
    """
    evaluator = PlacementEvaluator(topology, catalog, cost, mode)
    targets = mode.placement_cache_indexes(topology.num_cells)
    if lazy:
        _greedy_lazy(evaluator, targets)
    else:
        _greedy_naive(evaluator, targets)
    return evaluator.placement


def _initial_candidates(evaluator: PlacementEvaluator, targets: tuple[int, ...]):
    sizes = evaluator.catalog.file_sizes.tolist()
    capacities = {idx: evaluator.topology.capacity_of(idx) for idx in targets}
    for file in range(1, evaluator.num_files + 1):
        size = sizes[file - 1]
        for idx in targets:
            if size <= capacities[idx]:
                yield file, idx


def _greedy_lazy(evaluator: PlacementEvaluator, targets: tuple[int, ...]) -> None:
    placement = evaluator.placement
    sizes = evaluator.catalog.file_sizes.tolist()
    # (-gain, file, cache, step-at-evaluation); stale gains are upper bounds
    heap = []
    for file, idx in _initial_candidates(evaluator, targets):
        gain = evaluator.insert_gain(file, idx)
        if gain > 0.0:
            heap.append((-gain, file, idx, 0))
    heapq.heapify(heap)
    step = 0
    while heap:
        neg_gain, file, idx, stamp = heapq.heappop(heap)
        if sizes[file - 1] > placement.free_bytes(idx):
            continue  # capacity only shrinks; drop for good
        if stamp == step:
            evaluator.insert(file, idx)
            step += 1
        else:
            gain = evaluator.insert_gain(file, idx)
            if gain > 0.0:
                heapq.heappush(heap, (-gain, file, idx, step))


def _greedy_naive(evaluator: PlacementEvaluator, targets: tuple[int, ...]) -> None:
    placement = evaluator.placement
    sizes = evaluator.catalog.file_sizes.tolist()
    candidates = list(_initial_candidates(evaluator, targets))
    while candidates:
        best = None
        best_gain = 0.0
        feasible = []
        for file, idx in candidates:
            if sizes[file - 1] > placement.free_bytes(idx):
                continue
            feasible.append((file, idx))
            gain = evaluator.insert_gain(file, idx)
            if gain > best_gain:  # candidates scan in (file, cache) order
                best_gain = gain
                best = (file, idx)
        if best is None:
            return
        evaluator.insert(*best)
        feasible.remove(best)
        candidates = feasible


def _feasible_subsets(
    sizes: list[int], capacity: int, budget: int
) -> list[tuple[int, ...]]:
    """All file subsets with total size <= capacity, in lexicographic
    order of their sorted id tuples (empty set first)."""
    out: list[tuple[int, ...]] = []
    prefix: list[int] = []

    def extend(start: int, remaining: int) -> None:
        out.append(tuple(prefix))
        if len(out) > budget:
            raise InstanceTooLargeError(
                f"more than {budget} feasible subsets for one cache"
            )
        for file in range(start, len(sizes) + 1):
            size = sizes[file - 1]
            if size <= remaining:
                prefix.append(file)
                extend(file + 1, remaining - size)
                prefix.pop()

    extend(1, capacity)
    return out


def enumeration_count(topology: Topology, catalog: Catalog, mode: Architecture) -> int:
    """Number of placements :func:`brute_force_optimal` would enumerate
    (product over target caches of their feasible-subset counts)."""
    sizes = sorted(catalog.file_sizes.tolist())
    total = 1
    for idx in mode.placement_cache_indexes(topology.num_cells):
        capacity = topology.capacity_of(idx)
        # uniform-size shortcut is exact; otherwise count by recursion
        if sizes[0] == sizes[-1]:
            slots = min(capacity // sizes[0], len(sizes)) if sizes[0] else len(sizes)
            count = sum(math.comb(len(sizes), j) for j in range(int(slots) + 1))
        else:
            count = _count_subsets(sizes, capacity)
        total *= count
    return total


def _count_subsets(sizes: list[int], capacity: int) -> int:
    def rec(i: int, remaining: int) -> int:
        total = 1
        for j in range(i, len(sizes)):
            if sizes[j] <= remaining:
                total += rec(j + 1, remaining - sizes[j])
        return total

    return rec(0, capacity)


def brute_force_optimal(
    topology: Topology,
    catalog: Catalog,
    cost: CostModel,
    mode: Architecture,
    *,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> CachePlacement:
    """Exhaustive optimum over all capacity-feasible placements.

    Enumerates every slot-respecting file subset per target cache and
    returns a placement maximizing the delay saving; ties break by
    lexicographic placement encoding (first maximum in enumeration
    order). Raises :class:`InstanceTooLargeError` beyond ``budget``
    enumerated placements.
    """
    R = topology.num_cells
    targets = mode.placement_cache_indexes(R)
    if len(targets) > 12:
        raise InstanceTooLargeError(f"{len(targets)} caches exceed the enumeration budget")
    num_files = catalog.num_files
    sizes = catalog.file_sizes.tolist()

    subsets_per_cache: list[list[tuple[int, ...]]] = []
    total = 1
    for idx in targets:
        subs = _feasible_subsets(sizes, topology.capacity_of(idx), budget)
        total *= len(subs)
        if total > budget:
            raise InstanceTooLargeError(
                f"about {total} feasible placements exceed budget {budget}"
            )
        subsets_per_cache.append(subs)

    # saving contributed by one file as a function of which caches hold it,
    # computed from the cost model directly (independent of the greedy path)
    d = cost.cloud_to_edge_ms
    d0 = cost.origin_ms
    users = topology.users_per_cell
    pop = catalog.popularity.tolist()
    num_masks = 1 << (R + 1)
    unit_saving = [0.0] * num_masks
    for mask in range(num_masks):
        saved = 0.0
        for r in range(1, R + 1):
            options = [d0]
            if mode.local_edge_visible and (mask >> r) & 1:
                options.append(0.0)
            if mode.cloud_visible and mask & 1:
                options.append(d[r - 1])
            if mode.neighbors_visible:
                for k in range(1, R + 1):
                    if k != r and (mask >> k) & 1:
                        options.append(d[r - 1] + d[k - 1])
            saved += users[r - 1] * (d0 - min(options))
        unit_saving[mask] = saved
    value = [[p * unit_saving[m] for m in range(num_masks)] for p in pop]

    masks = [0] * (num_files + 1)
    chosen: list[tuple[int, ...]] = []
    best_value = -math.inf
    best_choice: list[tuple[int, ...]] | None = None

    def descend(depth: int) -> None:
        nonlocal best_value, best_choice
        if depth == len(targets):
            total_value = 0.0
            for file in range(1, num_files + 1):
                m = masks[file]
                if m:
                    total_value += value[file - 1][m]
            if total_value > best_value:
                best_value = total_value
                best_choice = list(chosen)
            return
        bit = 1 << targets[depth]
        for subset in subsets_per_cache[depth]:
            for file in subset:
                masks[file] |= bit
            chosen.append(subset)
            descend(depth + 1)
            chosen.pop()
            for file in subset:
                masks[file] &= ~bit

    descend(0)
    assert best_choice is not None
    placement = CachePlacement(topology, catalog)
    for idx, subset in zip(targets, best_choice):
        for file in subset:
            placement.insert(file, idx)
    return placement


def popularity_order(catalog: Catalog) -> list[int]:
    """File ids from most to least popular; ties by ascending id."""
    return sorted(range(1, catalog.num_files + 1), key=lambda f: (-catalog.popularity[f - 1], f))


def _fill_most_popular(placement: CachePlacement, cache_index: int, order, skip=frozenset()):
    free = placement.free_bytes(cache_index)
    for file in order:
        if file in skip:
            continue
        size = placement.catalog.size_of(file)
        if size <= free:
            placement.insert(file, cache_index)
            free -= size
    return placement


def most_popular_placement(topology: Topology, catalog: Catalog) -> CachePlacement:
    """Every cache independently holds the most popular files that fit."""
    placement = CachePlacement(topology, catalog)
    order = popularity_order(catalog)
    for idx in range(topology.num_cells + 1):
        _fill_most_popular(placement, idx, order)
    return placement


def mpc_ex_placement(topology: Topology, catalog: Catalog, cost: CostModel) -> CachePlacement:
    """Most-popular caching with exclusion: each edge cache holds the
    most popular files that fit; the cloud holds the most popular files
    not present in any edge cache."""
    placement = CachePlacement(topology, catalog)
    order = popularity_order(catalog)
    for r in range(1, topology.num_cells + 1):
        _fill_most_popular(placement, r, order)
    in_edges = set()
    for r in range(1, topology.num_cells + 1):
        in_edges |= placement.files_in(r)
    _fill_most_popular(placement, CLOUD_INDEX, order, skip=frozenset(in_edges))
    return placement


def edge_only_placement(
    topology: Topology, catalog: Catalog, cost: CostModel, *, lazy: bool = True
) -> CachePlacement:
    """Single-tier edge placement at equal total capacity: the whole
    budget is split evenly over the edge caches, then filled greedily
    (equivalently, by popularity, as the caches do not cooperate)."""
    return pcd_greedy(
        topology.spread_to_edges(), catalog, cost, Architecture.EDGE_ONLY, lazy=lazy
    )


def cloud_only_placement(
    topology: Topology, catalog: Catalog, cost: CostModel, *, lazy: bool = True
) -> CachePlacement:
    """Single-tier cloud placement at equal total capacity."""
    return pcd_greedy(
        topology.concentrate_in_cloud(), catalog, cost, Architecture.CLOUD_ONLY, lazy=lazy
    )


def femto_x_placement(
    topology: Topology, catalog: Catalog, cost: CostModel, *, lazy: bool = True
) -> CachePlacement:
    """Cooperative edge-only placement: the cloud share of the capacity
    is spread evenly over the edges, and the greedy runs with neighbor
    retrieval (edge sources + origin) in the objective."""
    return pcd_greedy(topology.spread_to_edges(), catalog, cost, Architecture.CHC, lazy=lazy)


def random_small_instance(
    rng: random.Random,
    *,
    max_cells: int = 3,
    max_files: int = 8,
    max_slots: int = 3,
    leaf_budget: int = 60_000,
) -> Model:
    """Random uniform-size instance small enough for the brute-force
    oracle; capacities are resampled until the enumeration stays within
    ``leaf_budget`` placements."""
    num_cells = rng.randint(1, max_cells)
    num_files = rng.randint(2, max_files)
    slot_choices = list(range(max_slots + 1))
    while True:
        edge_slots = [rng.choice(slot_choices) for _ in range(num_cells)]
        cloud_slots = rng.choice(slot_choices)
        count = 1
        for slots in edge_slots + [cloud_slots]:
            count *= sum(math.comb(num_files, j) for j in range(min(slots, num_files) + 1))
        if count <= leaf_budget:
            break
    users = [rng.randint(0, 5) for _ in range(num_cells)]
    if not any(users):
        users[0] = 1
    weights = [rng.random() + 0.05 for _ in range(num_files)]
    scale = sum(weights)
    popularity = [w / scale for w in weights]
    d = [rng.uniform(1.0, 50.0) for _ in range(num_cells)]
    d0 = max(d) + rng.uniform(10.0, 100.0)
    topology = Topology(num_cells, tuple(edge_slots), cloud_slots, tuple(users))
    cost = CostModel(tuple(d), d0)
    catalog = Catalog.uniform(num_files, 1, popularity)
    return validate_model(topology, cost, catalog)
