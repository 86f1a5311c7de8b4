"""Domain model shared by every other module: network topology, delay
cost model, content catalog, cache placements, and requests.

Conventions used throughout the package:

- cells are numbered 1..R and files 1..F (ids, not offsets);
- caches are addressed by :class:`CacheId` or by integer cache index,
  where index 0 is the cloud cache and index r (1..R) is the edge cache
  of cell r; the origin server is index -1 and never a placement target;
- capacities and file sizes are bytes, latencies are milliseconds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

POPULARITY_SUM_TOL = 1e-9

#: integer cache index of the cloud cache
CLOUD_INDEX = 0
#: pseudo cache index of the origin server (holds everything, never a target)
ORIGIN_INDEX = -1


class ModelValidationError(ValueError):
    """Raised when a model violates one or more invariants.

    Carries the full list of violations in ``errors`` so a caller can
    report all of them at once.
    """

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class CapacityError(ValueError):
    """Raised when an insertion would exceed a cache's byte capacity."""


class Architecture(enum.Enum):
    """Caching architecture; controls which cache tiers a request may be
    served from and which caches are placement targets.

    - CHC: cloud + edges, cooperative (neighbor edges reachable via the
      fronthaul U-turn).
    - NON_COOP: cloud + edges, no cooperation between edge caches.
    - EDGE_ONLY: edge caches only.
    - CLOUD_ONLY: cloud cache only.
    """

    CHC = "chc"
    NON_COOP = "noncoop"
    EDGE_ONLY = "edgeonly"
    CLOUD_ONLY = "cloudonly"

    @classmethod
    def parse(cls, name: str) -> "Architecture":
        try:
            return cls(name.strip().lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown architecture {name!r} (choices: {choices})") from None

    @property
    def cloud_visible(self) -> bool:
        return self in (Architecture.CHC, Architecture.NON_COOP, Architecture.CLOUD_ONLY)

    @property
    def local_edge_visible(self) -> bool:
        return self is not Architecture.CLOUD_ONLY

    @property
    def neighbors_visible(self) -> bool:
        return self is Architecture.CHC

    def placement_cache_indexes(self, num_cells: int) -> tuple[int, ...]:
        """Cache indexes this architecture places content into."""
        edges = tuple(range(1, num_cells + 1))
        if self is Architecture.EDGE_ONLY:
            return edges
        if self is Architecture.CLOUD_ONLY:
            return (CLOUD_INDEX,)
        return (CLOUD_INDEX,) + edges


@dataclass(frozen=True)
class CacheId:
    """Tagged identifier of a cache tier: cloud, one edge cache, or the
    origin server (which implicitly holds every file)."""

    tier: str  # 'cloud' | 'edge' | 'origin'
    cell: int = 0

    _TIERS = ("cloud", "edge", "origin")

    def __post_init__(self) -> None:
        if self.tier not in self._TIERS:
            raise ValueError(f"unknown cache tier {self.tier!r}")
        if self.tier == "edge" and self.cell < 1:
            raise ValueError("edge cache needs a cell index >= 1")
        if self.tier != "edge" and self.cell != 0:
            raise ValueError(f"{self.tier} cache takes no cell index")

    @classmethod
    def cloud(cls) -> "CacheId":
        return cls("cloud")

    @classmethod
    def edge(cls, cell: int) -> "CacheId":
        return cls("edge", cell)

    @classmethod
    def origin(cls) -> "CacheId":
        return cls("origin")

    @classmethod
    def from_index(cls, index: int) -> "CacheId":
        if index == ORIGIN_INDEX:
            return cls.origin()
        if index == CLOUD_INDEX:
            return cls.cloud()
        return cls.edge(index)

    @property
    def index(self) -> int:
        """Integer encoding: 0 cloud, r for edge r, -1 origin."""
        if self.tier == "cloud":
            return CLOUD_INDEX
        if self.tier == "edge":
            return self.cell
        return ORIGIN_INDEX

    @property
    def label(self) -> str:
        """Stable text form used in placement files: 'cloud' or 'edge:3'."""
        if self.tier == "edge":
            return f"edge:{self.cell}"
        return self.tier

    @classmethod
    def from_label(cls, label: str) -> "CacheId":
        if label == "cloud":
            return cls.cloud()
        if label == "origin":
            return cls.origin()
        if label.startswith("edge:"):
            return cls.edge(int(label.split(":", 1)[1]))
        raise ValueError(f"bad cache label {label!r}")

    def __str__(self) -> str:
        return self.label


CLOUD = CacheId.cloud()
ORIGIN = CacheId.origin()


def _as_int_tuple(values) -> tuple[int, ...]:
    return tuple(int(v) for v in values)


@dataclass(frozen=True)
class Topology:
    """Network of R cells, each with an edge cache, plus one cloud cache.

    ``users_per_cell`` weights the delay objective: every user in a cell
    sees the same popularity and the same costs, so the per-cell count is
    all the objective needs.
    """

    num_cells: int
    edge_capacities: tuple[int, ...]
    cloud_capacity: int
    users_per_cell: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "num_cells", int(self.num_cells))
        object.__setattr__(self, "edge_capacities", _as_int_tuple(self.edge_capacities))
        object.__setattr__(self, "cloud_capacity", int(self.cloud_capacity))
        object.__setattr__(self, "users_per_cell", _as_int_tuple(self.users_per_cell))

    @classmethod
    def uniform(
        cls,
        num_cells: int,
        edge_capacity: int,
        cloud_capacity: int,
        total_users: int,
    ) -> "Topology":
        """Identical edge caches; users assigned round-robin to cells."""
        base, extra = divmod(int(total_users), num_cells)
        users = tuple(base + (1 if r < extra else 0) for r in range(num_cells))
        return cls(num_cells, (int(edge_capacity),) * num_cells, int(cloud_capacity), users)

    @property
    def total_users(self) -> int:
        return sum(self.users_per_cell)

    @property
    def total_capacity(self) -> int:
        return self.cloud_capacity + sum(self.edge_capacities)

    def capacity_of(self, cache_index: int) -> int:
        if cache_index == CLOUD_INDEX:
            return self.cloud_capacity
        return self.edge_capacities[cache_index - 1]

    def spread_to_edges(self) -> "Topology":
        """Move all capacity to the edge caches, split evenly.

        Remainder bytes go to the lowest-index edges so the total is
        preserved exactly.
        """
        total = self.total_capacity
        base, extra = divmod(total, self.num_cells)
        edges = tuple(base + (1 if r < extra else 0) for r in range(self.num_cells))
        return Topology(self.num_cells, edges, 0, self.users_per_cell)

    def concentrate_in_cloud(self) -> "Topology":
        """Move all capacity to the cloud cache."""
        return Topology(
            self.num_cells, (0,) * self.num_cells, self.total_capacity, self.users_per_cell
        )

    def for_architecture(self, mode: Architecture) -> "Topology":
        """Capacity layout used when comparing architectures at equal
        total capacity: single-tier architectures take the whole budget."""
        if mode is Architecture.EDGE_ONLY:
            return self.spread_to_edges()
        if mode is Architecture.CLOUD_ONLY:
            return self.concentrate_in_cloud()
        return self


@dataclass(frozen=True)
class CostModel:
    """Per-file transfer delays: cloud-to-edge per cell, and origin.

    The cost of serving from a neighbor edge cache k to cell r is
    ``cloud_to_edge_ms[r] + cloud_to_edge_ms[k]`` (the fronthaul U-turn);
    a hit in the requesting cell's own edge cache costs zero.
    """

    cloud_to_edge_ms: tuple[float, ...]
    origin_ms: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "cloud_to_edge_ms", tuple(float(v) for v in self.cloud_to_edge_ms)
        )
        object.__setattr__(self, "origin_ms", float(self.origin_ms))

    @classmethod
    def uniform(cls, num_cells: int, cloud_to_edge_ms: float, origin_ms: float) -> "CostModel":
        return cls((float(cloud_to_edge_ms),) * num_cells, origin_ms)

    def cloud_ms(self, cell: int) -> float:
        return self.cloud_to_edge_ms[cell - 1]

    def edge_to_edge_ms(self, cell: int, other: int) -> float:
        return self.cloud_to_edge_ms[cell - 1] + self.cloud_to_edge_ms[other - 1]


@dataclass(frozen=True, eq=False)
class Catalog:
    """F files with per-file byte sizes and a global popularity vector."""

    file_sizes: np.ndarray
    popularity: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "file_sizes", np.ascontiguousarray(self.file_sizes, dtype=np.int64)
        )
        object.__setattr__(
            self, "popularity", np.ascontiguousarray(self.popularity, dtype=np.float64)
        )

    @classmethod
    def uniform(cls, num_files: int, file_size: int, popularity) -> "Catalog":
        return cls(np.full(num_files, int(file_size), dtype=np.int64), np.asarray(popularity))

    @property
    def num_files(self) -> int:
        return int(self.file_sizes.shape[0])

    @property
    def total_bytes(self) -> int:
        return int(self.file_sizes.sum())

    def size_of(self, file: int) -> int:
        return int(self.file_sizes[file - 1])

    def popularity_of(self, file: int) -> float:
        return float(self.popularity[file - 1])


@dataclass(frozen=True)
class Request:
    """One content request: sequence number, requesting cell, file id,
    and an optional opaque user identifier kept for trace fidelity."""

    seq: int
    cell: int
    file: int
    user: str | None = None


@dataclass(frozen=True)
class Model:
    """Validated bundle of topology, cost model, and catalog."""

    topology: Topology
    cost: CostModel
    catalog: Catalog


def model_errors(topology: Topology, cost: CostModel, catalog: Catalog) -> list[str]:
    """Check every model invariant; return all violations (empty if valid)."""
    errors: list[str] = []
    R = topology.num_cells
    if R < 1:
        errors.append(f"num_cells must be >= 1, got {R}")
    if len(topology.edge_capacities) != R:
        errors.append(
            f"edge capacity vector length {len(topology.edge_capacities)} != num_cells {R}"
        )
    if len(topology.users_per_cell) != R:
        errors.append(f"users_per_cell length {len(topology.users_per_cell)} != num_cells {R}")
    if any(c < 0 for c in topology.edge_capacities) or topology.cloud_capacity < 0:
        errors.append("capacities must be >= 0")
    if any(u < 0 for u in topology.users_per_cell):
        errors.append("users_per_cell entries must be >= 0")

    if len(cost.cloud_to_edge_ms) != R:
        errors.append(f"cost vector length {len(cost.cloud_to_edge_ms)} != num_cells {R}")
    if any(d < 0 for d in cost.cloud_to_edge_ms):
        errors.append("cloud-to-edge delays must be >= 0")
    if cost.cloud_to_edge_ms and cost.origin_ms <= max(cost.cloud_to_edge_ms):
        errors.append(
            "origin not dominant: origin_ms must exceed every cloud-to-edge delay "
            f"({cost.origin_ms} <= {max(cost.cloud_to_edge_ms)})"
        )

    if catalog.num_files < 1:
        errors.append("catalog must contain at least one file")
    if np.any(catalog.file_sizes <= 0):
        errors.append("file sizes must be > 0")
    if np.any(catalog.popularity < 0):
        errors.append("popularity entries must be >= 0")
    total = float(catalog.popularity.sum())
    if abs(total - 1.0) > POPULARITY_SUM_TOL:
        errors.append(f"popularity not normalized: sums to {total!r}")
    return errors


def validate_model(topology: Topology, cost: CostModel, catalog: Catalog) -> Model:
    """Return a :class:`Model` if all invariants hold, else raise
    :class:`ModelValidationError` listing every violation."""
    errors = model_errors(topology, cost, catalog)
    if errors:
        raise ModelValidationError(errors)
    return Model(topology, cost, catalog)


class CachePlacement:
    """Mutable assignment of files to the cloud and edge caches.

    Capacity feasibility is enforced on every mutation; a file may appear
    in several caches but never twice in the same cache. Single-writer:
    share read-only across threads, mutate from one.
    """

    __slots__ = ("topology", "catalog", "_contents", "_used")

    def __init__(self, topology: Topology, catalog: Catalog):
        self.topology = topology
        self.catalog = catalog
        self._contents: list[set[int]] = [set() for _ in range(topology.num_cells + 1)]
        self._used: list[int] = [0] * (topology.num_cells + 1)

    @staticmethod
    def _index(cache: CacheId | int) -> int:
        return cache.index if isinstance(cache, CacheId) else int(cache)

    def _check_cache(self, idx: int) -> int:
        if not 0 <= idx <= self.topology.num_cells:
            raise ValueError(f"cache index {idx} out of range (origin is not a target)")
        return idx

    def insert(self, file: int, cache: CacheId | int) -> None:
        idx = self._check_cache(self._index(cache))
        if file in self._contents[idx]:
            raise ValueError(f"file {file} already in {CacheId.from_index(idx)}")
        size = self.catalog.size_of(file)
        if self._used[idx] + size > self.topology.capacity_of(idx):
            raise CapacityError(
                f"file {file} ({size} B) does not fit in {CacheId.from_index(idx)} "
                f"({self.free_bytes(idx)} B free)"
            )
        self._contents[idx].add(file)
        self._used[idx] += size

    def remove(self, file: int, cache: CacheId | int) -> None:
        idx = self._check_cache(self._index(cache))
        self._contents[idx].remove(file)
        self._used[idx] -= self.catalog.size_of(file)

    def contains(self, cache: CacheId | int, file: int) -> bool:
        return file in self._contents[self._check_cache(self._index(cache))]

    def files_in(self, cache: CacheId | int) -> frozenset[int]:
        return frozenset(self._contents[self._check_cache(self._index(cache))])

    def used_bytes(self, cache: CacheId | int) -> int:
        return self._used[self._check_cache(self._index(cache))]

    def free_bytes(self, cache: CacheId | int) -> int:
        idx = self._check_cache(self._index(cache))
        return self.topology.capacity_of(idx) - self._used[idx]

    def holders_mask(self, file: int) -> int:
        """Bitmask of caches holding ``file``: bit 0 cloud, bit r edge r."""
        mask = 0
        for idx, content in enumerate(self._contents):
            if file in content:
                mask |= 1 << idx
        return mask

    def cache_ids(self) -> Iterator[CacheId]:
        yield CLOUD
        for r in range(1, self.topology.num_cells + 1):
            yield CacheId.edge(r)

    @property
    def num_assignments(self) -> int:
        return sum(len(c) for c in self._contents)

    def total_cached_bytes(self) -> int:
        return sum(self._used)

    def copy(self) -> "CachePlacement":
        dup = CachePlacement(self.topology, self.catalog)
        dup._contents = [set(c) for c in self._contents]
        dup._used = list(self._used)
        return dup

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CachePlacement):
            return NotImplemented
        return self._contents == other._contents

    def __repr__(self) -> str:
        parts = ", ".join(
            f"{CacheId.from_index(i).label}:{sorted(c)}"
            for i, c in enumerate(self._contents)
            if c
        )
        return f"CachePlacement({parts or 'empty'})"

    # --- text serialization: one `cache_id<TAB>file_id` line per entry ---

    def to_lines(self) -> list[str]:
        lines = []
        for idx in range(self.topology.num_cells + 1):
            label = CacheId.from_index(idx).label
            for file in sorted(self._contents[idx]):
                lines.append(f"{label}\t{file}")
        return lines

    def encoding(self) -> tuple[tuple[int, ...], ...]:
        """Sorted per-cache file tuples, cloud first; total order for
        deterministic tie-breaking."""
        return tuple(tuple(sorted(c)) for c in self._contents)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.to_lines():
                fh.write(line + "\n")

    @classmethod
    def from_lines(
        cls, topology: Topology, catalog: Catalog, lines: Iterable[str]
    ) -> "CachePlacement":
        placement = cls(topology, catalog)
        for ln, raw in enumerate(lines, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                label, file_text = raw.split("\t")
                placement.insert(int(file_text), CacheId.from_label(label))
            except (ValueError, CapacityError) as exc:
                if isinstance(exc, CapacityError):
                    raise
                raise ValueError(f"bad placement line {ln}: {raw!r}") from exc
        return placement

    @classmethod
    def read(cls, topology: Topology, catalog: Catalog, path) -> "CachePlacement":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_lines(topology, catalog, fh)
