"""Delay-cost objective and marginal-gain machinery.

The expected delay of a cell is the popularity-weighted serving latency
over the catalog; the network objective weights cells by their user
counts. Placement algorithms maximize the *delay saving* relative to
empty caches, which is monotone and submodular in the set of
(file, cache) assignments, so greedy insertion carries the usual 1/2
approximation guarantee under per-cache capacity constraints.

Serving preference for a request in cell r, most- to least-preferred on
equal latency: own edge cache (cost 0), cloud (cloud-to-edge delay),
neighbor edge k (sum of both fronthaul delays, lowest k first), origin.
The chosen source is always latency-minimal among the sources the
architecture makes visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CLOUD_INDEX,
    ORIGIN_INDEX,
    Architecture,
    CacheId,
    CachePlacement,
    CapacityError,
    Catalog,
    CostModel,
    Topology,
)


@dataclass(frozen=True)
class ServingDecision:
    """Outcome of routing one request: the serving cache and its latency."""

    source: CacheId
    latency_ms: float
    local_hit: bool = False


def _mask_latency(
    mask: int,
    cell: int,
    d: tuple[float, ...],
    d0: float,
    mode: Architecture,
) -> float:
    """Minimum visible serving latency for a file held by the caches in
    ``mask`` (bit 0 cloud, bit r edge r), requested from ``cell``."""
    if mode.local_edge_visible and (mask >> cell) & 1:
        return 0.0
    best = d0
    dr = d[cell - 1]
    if mode.cloud_visible and mask & 1:
        if dr < best:
            best = dr
    if mode.neighbors_visible and mask >> 1:
        for k in range(1, len(d) + 1):
            if k != cell and (mask >> k) & 1:
                c = dr + d[k - 1]
                if c < best:
                    best = c
    return best


def _mask_source(
    mask: int,
    cell: int,
    d: tuple[float, ...],
    d0: float,
    mode: Architecture,
) -> tuple[int, float]:
    """Latency-minimal visible source with deterministic tie-breaking:
    local edge, then cloud, then neighbors by ascending cell, then origin.
    Returns (cache index, latency); origin is index -1."""
    if mode.local_edge_visible and (mask >> cell) & 1:
        return cell, 0.0
    best = d0
    src = ORIGIN_INDEX
    dr = d[cell - 1]
    if mode.cloud_visible and mask & 1 and dr <= best:
        best = dr
        src = CLOUD_INDEX
    if mode.neighbors_visible and mask >> 1:
        for k in range(1, len(d) + 1):
            if k != cell and (mask >> k) & 1:
                c = dr + d[k - 1]
                if c < best or (c == best and src == ORIGIN_INDEX):
                    best = c
                    src = k
    return src, best


def serving_cost(
    placement: CachePlacement,
    cell: int,
    file: int,
    cost: CostModel,
    mode: Architecture,
) -> ServingDecision:
    """Route one request against a placement: the latency-minimal source
    among those the architecture makes visible, origin if none holds the
    file."""
    mask = placement.holders_mask(file)
    src, latency = _mask_source(mask, cell, cost.cloud_to_edge_ms, cost.origin_ms, mode)
    return ServingDecision(CacheId.from_index(src), latency, local_hit=(src == cell))


def expected_cell_delay(
    placement: CachePlacement,
    cell: int,
    catalog: Catalog,
    cost: CostModel,
    mode: Architecture,
) -> float:
    """Popularity-weighted serving latency for any user in ``cell`` [ms]."""
    d = cost.cloud_to_edge_ms
    d0 = cost.origin_ms
    pop = catalog.popularity.tolist()
    total = 0.0
    for file in range(1, catalog.num_files + 1):
        total += pop[file - 1] * _mask_latency(placement.holders_mask(file), cell, d, d0, mode)
    return total


def total_expected_delay(
    placement: CachePlacement,
    topology: Topology,
    catalog: Catalog,
    cost: CostModel,
    mode: Architecture,
) -> float:
    """User-weighted network delay: sum over cells of users x cell delay
    [ms x users]."""
    return sum(
        users * expected_cell_delay(placement, r, catalog, cost, mode)
        for r, users in enumerate(topology.users_per_cell, start=1)
        if users
    )


def delay_saving(
    placement: CachePlacement,
    topology: Topology,
    catalog: Catalog,
    cost: CostModel,
    mode: Architecture,
) -> float:
    """Delay saved relative to empty caches [ms x users]; the monotone
    submodular set function placement algorithms maximize."""
    empty = CachePlacement(topology, catalog)
    empty_total = total_expected_delay(empty, topology, catalog, cost, mode)
    return empty_total - total_expected_delay(placement, topology, catalog, cost, mode)


def marginal_gain(
    placement: CachePlacement,
    candidate: tuple[int, CacheId | int],
    topology: Topology,
    catalog: Catalog,
    cost: CostModel,
    mode: Architecture,
) -> float:
    """Delay-saving increase from adding ``candidate`` = (file, cache) to
    the placement; 0 if the file is already in that cache.

    Raises :class:`CapacityError` when the file does not fit in the
    cache's remaining capacity.
    """
    file, cache = candidate
    idx = cache.index if isinstance(cache, CacheId) else int(cache)
    if not 0 <= idx <= topology.num_cells:
        raise ValueError(f"candidate cache must be cloud or an edge, got index {idx}")
    if placement.contains(idx, file):
        return 0.0
    if catalog.size_of(file) > placement.free_bytes(idx):
        raise CapacityError(f"file {file} does not fit in {CacheId.from_index(idx)}")

    d = cost.cloud_to_edge_ms
    d0 = cost.origin_ms
    mask = placement.holders_mask(file)
    users = topology.users_per_cell
    gain = 0.0
    for r in range(1, topology.num_cells + 1):
        if not users[r - 1]:
            continue
        before = _mask_latency(mask, r, d, d0, mode)
        after = _mask_latency(mask | (1 << idx), r, d, d0, mode)
        if before > after:
            gain += users[r - 1] * (before - after)
    return gain * catalog.popularity_of(file)


class PlacementEvaluator:
    """Incremental delay-saving evaluator bound to one placement.

    Keeps the current serving latency of every (cell, file) pair so that
    marginal gains and losses cost O(R) instead of O(F R). The evaluator
    owns its placement while in use: route all mutations through
    :meth:`insert` / :meth:`remove`. Reads are safe from multiple
    threads between mutations.
    """

    __slots__ = (
        "topology",
        "catalog",
        "cost",
        "mode",
        "placement",
        "num_cells",
        "num_files",
        "_users",
        "_pop",
        "_d",
        "_d0",
        "_lat",
        "_mask",
        "_saving",
        "_local_visible",
        "_cloud_visible",
        "_neighbors_visible",
    )

    def __init__(
        self,
        topology: Topology,
        catalog: Catalog,
        cost: CostModel,
        mode: Architecture,
        placement: CachePlacement | None = None,
    ):
        self.topology = topology
        self.catalog = catalog
        self.cost = cost
        self.mode = mode
        self.num_cells = topology.num_cells
        self.num_files = catalog.num_files
        self._users = [float(u) for u in topology.users_per_cell]
        self._pop = catalog.popularity.tolist()
        self._d = [float(x) for x in cost.cloud_to_edge_ms]
        self._d0 = float(cost.origin_ms)
        self._local_visible = mode.local_edge_visible
        self._cloud_visible = mode.cloud_visible
        self._neighbors_visible = mode.neighbors_visible

        self.placement = placement if placement is not None else CachePlacement(topology, catalog)
        self._lat = [[self._d0] * self.num_files for _ in range(self.num_cells)]
        self._mask = [0] * (self.num_files + 1)  # holders bitmask per file id
        self._saving = 0.0
        if placement is not None:
            self._rebuild()

    def _rebuild(self) -> None:
        for idx in range(self.num_cells + 1):
            bit = 1 << idx
            for file in self.placement.files_in(idx):
                self._mask[file] |= bit
                self._relax(file, idx)
        base = sum(self._users) * sum(self._pop) * self._d0
        self._saving = base - self.total_expected_delay()

    # --- queries ---

    def serving_latency(self, cell: int, file: int) -> float:
        return self._lat[cell - 1][file - 1]

    def route(self, cell: int, file: int) -> tuple[int, float]:
        """(source cache index, latency); origin is -1. Hot path."""
        mask = self._mask[file]
        if self._local_visible and (mask >> cell) & 1:
            return cell, 0.0
        d = self._d
        best = self._d0
        src = ORIGIN_INDEX
        dr = d[cell - 1]
        if self._cloud_visible and mask & 1 and dr <= best:
            best = dr
            src = CLOUD_INDEX
        if self._neighbors_visible and mask >> 1:
            for k in range(1, self.num_cells + 1):
                if k != cell and (mask >> k) & 1:
                    c = dr + d[k - 1]
                    if c < best or (c == best and src == ORIGIN_INDEX):
                        best = c
                        src = k
        return src, best

    def holders_mask(self, file: int) -> int:
        return self._mask[file]

    def _lat_for_mask(self, mask: int, cell: int) -> float:
        """Like route() but latency only; avoids per-call mode dispatch."""
        if self._local_visible and (mask >> cell) & 1:
            return 0.0
        d = self._d
        best = self._d0
        dr = d[cell - 1]
        if self._cloud_visible and mask & 1 and dr < best:
            best = dr
        if self._neighbors_visible and mask >> 1:
            for k in range(1, self.num_cells + 1):
                if k != cell and (mask >> k) & 1:
                    c = dr + d[k - 1]
                    if c < best:
                        best = c
        return best

    def decision(self, cell: int, file: int) -> ServingDecision:
        src, latency = self.route(cell, file)
        return ServingDecision(CacheId.from_index(src), latency, local_hit=(src == cell))

    def expected_cell_delay(self, cell: int) -> float:
        row = np.asarray(self._lat[cell - 1])
        return float(np.dot(self.catalog.popularity, row))

    def total_expected_delay(self) -> float:
        return sum(
            self._users[r] * self.expected_cell_delay(r + 1)
            for r in range(self.num_cells)
            if self._users[r]
        )

    def delay_saving(self) -> float:
        """Running saving, updated incrementally on every mutation."""
        return self._saving

    def delay_saving_recomputed(self) -> float:
        """Saving recomputed from the latency table; for consistency checks."""
        base = sum(self._users) * sum(self._pop) * self._d0
        return base - self.total_expected_delay()

    # --- marginal values ---

    def insert_gain_unit(self, file: int, cache_index: int) -> float:
        """User-weighted latency reduction from inserting ``file`` into
        the cache, per unit of popularity (capacity not checked here)."""
        fi = file - 1
        users = self._users
        d = self._d
        gain = 0.0
        if cache_index == CLOUD_INDEX:
            if self._cloud_visible:
                for r in range(self.num_cells):
                    delta = self._lat[r][fi] - d[r]
                    if delta > 0.0 and users[r]:
                        gain += users[r] * delta
        else:
            k = cache_index
            if self._local_visible and users[k - 1]:
                gain += users[k - 1] * self._lat[k - 1][fi]
            if self._neighbors_visible:
                dk = d[k - 1]
                for r in range(self.num_cells):
                    if r != k - 1 and users[r]:
                        delta = self._lat[r][fi] - (d[r] + dk)
                        if delta > 0.0:
                            gain += users[r] * delta
        return gain

    def insert_gain(self, file: int, cache_index: int) -> float:
        """Delay-saving increase from inserting ``file`` into the cache."""
        return self.insert_gain_unit(file, cache_index) * self._pop[file - 1]

    def remove_loss_unit(self, file: int, cache_index: int) -> float:
        """User-weighted latency increase from evicting ``file`` from the
        cache, per unit of popularity."""
        mask = self._mask[file] & ~(1 << cache_index)
        fi = file - 1
        loss = 0.0
        for r in range(self.num_cells):
            if not self._users[r]:
                continue
            delta = self._lat_for_mask(mask, r + 1) - self._lat[r][fi]
            if delta > 0.0:
                loss += self._users[r] * delta
        return loss

    def remove_loss(self, file: int, cache_index: int) -> float:
        """Delay-saving decrease from evicting ``file`` from the cache."""
        return self.remove_loss_unit(file, cache_index) * self._pop[file - 1]

    # --- mutations ---

    def _relax(self, file: int, cache_index: int) -> None:
        fi = file - 1
        d = self._d
        if cache_index == CLOUD_INDEX:
            if self._cloud_visible:
                for r in range(self.num_cells):
                    if d[r] < self._lat[r][fi]:
                        self._lat[r][fi] = d[r]
        else:
            k = cache_index
            if self._local_visible:
                self._lat[k - 1][fi] = 0.0
            if self._neighbors_visible:
                dk = d[k - 1]
                for r in range(self.num_cells):
                    if r != k - 1 and d[r] + dk < self._lat[r][fi]:
                        self._lat[r][fi] = d[r] + dk

    def insert(self, file: int, cache_index: int) -> float:
        """Insert and return the realized gain. Raises on duplicates or
        capacity overflow, leaving state unchanged."""
        gain = self.insert_gain(file, cache_index)
        self.placement.insert(file, cache_index)
        self._mask[file] |= 1 << cache_index
        self._relax(file, cache_index)
        self._saving += gain
        return gain

    def remove(self, file: int, cache_index: int) -> float:
        """Evict and return the realized loss."""
        loss = self.remove_loss(file, cache_index)
        self.placement.remove(file, cache_index)
        mask = self._mask[file] & ~(1 << cache_index)
        self._mask[file] = mask
        fi = file - 1
        for r in range(self.num_cells):
            self._lat[r][fi] = self._lat_for_mask(mask, r + 1)
        self._saving -= loss
        return loss
