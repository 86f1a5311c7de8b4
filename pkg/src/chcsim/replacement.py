"""Online cache-replacement policies applied per request during replay.

A policy sees every routed request as a :class:`PolicyEvent` and may
answer with :class:`ReplacementAction` items. The simulator applies the
returned actions in order, immediately, and policies may rely on that
when keeping private bookkeeping (recency queues, victim heaps).

- ``rcr``: reactive replacement; on a system-wide miss, evaluates
  swapping the fetched file into the caches on its delivery path and
  acts only when the delay-saving objective improves.
- ``lru``: classic least-recently-used admission/eviction per cache.
- ``static``: never mutates the placement.
"""

from __future__ import annotations

import heapq
import itertools
from collections import OrderedDict
from dataclasses import dataclass

from .model import CLOUD_INDEX, ORIGIN_INDEX, CacheId, Request
from .objective import PlacementEvaluator, ServingDecision

COMBINATION_LIMIT = 50_000


@dataclass(frozen=True)
class ReplacementAction:
    """Evict ``evict`` from ``cache`` (possibly nothing), then insert
    ``insert``; the cache stays capacity-feasible."""

    cache: CacheId
    evict: frozenset[int]
    insert: int


@dataclass(frozen=True)
class PolicyEvent:
    """One trace request together with its routing outcome."""

    request: Request
    decision: ServingDecision


class ReplacementPolicy:
    """Base policy. ``bind`` is called once before replay with the
    evaluator whose placement the policy will steer.

    Policies implement :meth:`on_request` (plain ints; the replay hot
    path); :meth:`on_event` is the event-object convenience wrapper over
    it. Both are called once per request in trace order.
    """

    name = "base"

    def bind(self, evaluator: PlacementEvaluator) -> None:
        self._ev = evaluator

    def on_event(self, event: PolicyEvent) -> list[ReplacementAction]:
        return self.on_request(
            event.request.seq,
            event.request.cell,
            event.request.file,
            event.decision.source.index,
            event.decision.latency_ms,
        )

    def on_request(
        self, seq: int, cell: int, file: int, source_index: int, latency: float
    ) -> list[ReplacementAction]:
        raise NotImplementedError


class StaticPolicy(ReplacementPolicy):
    """No-op policy: metrics depend on the initial placement only."""

    name = "static"

    def on_request(self, seq, cell, file, source_index, latency):
        return []


class LruPolicy(ReplacementPolicy):
    """Least-recently-used admission and eviction.

    On a local-edge miss the file is admitted to the requesting cell's
    edge cache, evicting LRU residents until it fits; when the cloud
    tier exists, a cloud miss likewise admits the file to the cloud.
    Hits refresh the recency of the serving cache's entry. Files present
    at bind time start least-recent, ordered by file id.
    """

    name = "lru"

    def bind(self, evaluator: PlacementEvaluator) -> None:
        super().bind(evaluator)
        mode = evaluator.mode
        placement = evaluator.placement
        self._local_visible = mode.local_edge_visible
        self._cloud_visible = mode.cloud_visible
        managed: list[int] = []
        if self._local_visible:
            managed.extend(range(1, evaluator.num_cells + 1))
        if self._cloud_visible:
            managed.append(CLOUD_INDEX)
        self._recency: dict[int, OrderedDict[int, None]] = {}
        for idx in managed:
            queue: OrderedDict[int, None] = OrderedDict()
            for file in sorted(placement.files_in(idx)):
                queue[file] = None
            self._recency[idx] = queue

    def on_request(self, seq, cell, file, source_index, latency):
        if source_index != ORIGIN_INDEX:
            queue = self._recency.get(source_index)
            if queue is not None and file in queue:
                queue.move_to_end(file)
        actions = []
        if self._local_visible and source_index != cell:
            action = self._admit(cell, file)
            if action is not None:
                actions.append(action)
        if self._cloud_visible and not self._ev.placement.contains(CLOUD_INDEX, file):
            action = self._admit(CLOUD_INDEX, file)
            if action is not None:
                actions.append(action)
        return actions

    def _admit(self, idx: int, file: int) -> ReplacementAction | None:
        placement = self._ev.placement
        if placement.contains(idx, file):
            return None
        size = self._ev.catalog.size_of(file)
        if size > self._ev.topology.capacity_of(idx):
            return None
        queue = self._recency[idx]
        free = placement.free_bytes(idx)
        evict: list[int] = []
        for victim in queue:  # least recent first
            if free >= size:
                break
            evict.append(victim)
            free += self._ev.catalog.size_of(victim)
        if free < size:
            return None
        for victim in evict:
            del queue[victim]
        queue[file] = None
        return ReplacementAction(CacheId.from_index(idx), frozenset(evict), file)


class RcrPolicy(ReplacementPolicy):
    """Reactive replacement driven by the delay-saving objective.

    Acts only on system-wide misses. For the requesting cell's edge
    cache and then the cloud, it finds the cheapest eviction set that
    makes room (fewest files, then lowest aggregate popularity) and
    keeps the fetched file in the single cache where the swap improves
    the objective the most; no action if no swap improves it.

    ``popularity="prior"`` scores files with the catalog popularity;
    ``popularity="empirical"`` scores them with exponentially decayed
    request counts (``decay`` per request) learned from the trace
    itself.
    """

    name = "rcr"

    def __init__(self, popularity: str = "prior", decay: float = 0.999):
        if popularity not in ("prior", "empirical"):
            raise ValueError(f"unknown popularity source {popularity!r}")
        if not 0.0 < decay <= 1.0:
            raise ValueError("decay must be in (0, 1]")
        self.popularity_source = popularity
        self.decay = float(decay)

    def bind(self, evaluator: PlacementEvaluator) -> None:
        super().bind(evaluator)
        self._prior = evaluator.catalog.popularity.tolist()
        self._local_visible = evaluator.mode.local_edge_visible
        self._cloud_visible = evaluator.mode.cloud_visible
        self._uniform_sizes = bool(
            (evaluator.catalog.file_sizes == evaluator.catalog.file_sizes[0]).all()
        )
        if self.popularity_source == "empirical":
            self._scores = [0.0] * (evaluator.num_files + 1)
            self._weight = 1.0
            self._heaps = None
        else:
            # static priorities: keep a min-heap of (popularity, id) per cache
            self._heaps = {}
            for idx in range(evaluator.num_cells + 1):
                entries = [
                    (self._prior[f - 1], f) for f in evaluator.placement.files_in(idx)
                ]
                heapq.heapify(entries)
                self._heaps[idx] = entries

    def _score(self, file: int) -> float:
        if self.popularity_source == "prior":
            return self._prior[file - 1]
        return self._scores[file]

    def _observe(self, file: int) -> None:
        self._weight /= self.decay
        self._scores[file] += self._weight
        if self._weight > 1e300:
            scale = 1.0 / self._weight
            self._scores = [s * scale for s in self._scores]
            self._weight = 1.0

    def on_request(self, seq, cell, file, source_index, latency):
        if self.popularity_source == "empirical":
            self._observe(file)
        if source_index != ORIGIN_INDEX:
            return []
        candidates: list[int] = []
        if self._local_visible:
            candidates.append(cell)
        if self._cloud_visible:
            candidates.append(CLOUD_INDEX)

        best_idx = None
        best_plan: list[int] = []
        best_delta = 0.0
        score = self._score(file)
        for idx in candidates:
            plan = self._eviction_plan(idx, file)
            if plan is None:
                continue
            delta = score * self._ev.insert_gain_unit(file, idx)
            if delta <= best_delta:  # eviction losses only shrink it further
                continue
            for victim in plan:
                delta -= self._score(victim) * self._ev.remove_loss_unit(victim, idx)
            if delta > best_delta:
                best_delta = delta
                best_idx = idx
                best_plan = plan
        if best_idx is None:
            return []
        self._apply_bookkeeping(best_idx, best_plan, file)
        return [
            ReplacementAction(CacheId.from_index(best_idx), frozenset(best_plan), file)
        ]

    def _apply_bookkeeping(self, idx: int, evict: list[int], insert: int) -> None:
        if self._heaps is None:
            return
        heap = self._heaps[idx]
        if evict:
            gone = set(evict)
            if len(evict) == 1 and heap and heap[0][1] == evict[0]:
                heapq.heappop(heap)
            else:
                self._heaps[idx] = heap = [e for e in heap if e[1] not in gone]
                heapq.heapify(heap)
        heapq.heappush(heap, (self._prior[insert - 1], insert))

    def _eviction_plan(self, idx: int, file: int) -> list[int] | None:
        """Cheapest residents to evict so ``file`` fits: fewest files,
        then lowest aggregate popularity (ties by ascending ids).
        None when the file cannot fit at all."""
        placement = self._ev.placement
        catalog = self._ev.catalog
        size = catalog.size_of(file)
        capacity = self._ev.topology.capacity_of(idx)
        if size > capacity:
            return None
        needed = size - placement.free_bytes(idx)
        if needed <= 0:
            return []
        if self._uniform_sizes and self._heaps is not None:
            # one slot always suffices; the heap top is the best victim
            return [self._heaps[idx][0][1]]

        residents = sorted(placement.files_in(idx))
        by_size = sorted(residents, key=lambda f: -catalog.size_of(f))
        freed = 0
        count = 0
        for victim in by_size:
            freed += catalog.size_of(victim)
            count += 1
            if freed >= needed:
                break
        if freed < needed:
            return None
        if count == 1:
            adequate = [f for f in residents if catalog.size_of(f) >= needed]
            return [min(adequate, key=lambda f: (self._score(f), f))]
        if _comb_within_limit(len(residents), count):
            best = None
            for combo in itertools.combinations(residents, count):
                if sum(catalog.size_of(f) for f in combo) < needed:
                    continue
                key = (sum(self._score(f) for f in combo), combo)
                if best is None or key < best[0]:
                    best = (key, list(combo))
            if best is not None:
                return best[1]
        # bounded fallback: largest-first keeps the count minimal
        return by_size[:count]


def _comb_within_limit(n: int, k: int, limit: int = COMBINATION_LIMIT) -> bool:
    """True when C(n, k) stays within the exact-search limit."""
    total = 1
    for i in range(k):
        total = total * (n - i) // (i + 1)
        if total > limit:
            return False
    return True


def make_policy(name: str, *, rcr_popularity: str = "prior", rcr_decay: float = 0.999):
    """Instantiate a policy by its CLI name: ``rcr``, ``lru``, or
    ``static``."""
    name = name.strip().lower()
    if name == "rcr":
        return RcrPolicy(popularity=rcr_popularity, decay=rcr_decay)
    if name == "lru":
        return LruPolicy()
    if name == "static":
        return StaticPolicy()
    raise ValueError(f"unknown policy {name!r} (choices: rcr, lru, static)")
