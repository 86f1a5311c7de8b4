import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chcsim.model import Architecture, Catalog, CostModel, Topology, validate_model
from chcsim.trace import zipf_popularity

ALL_MODES = tuple(Architecture)


def small_model(
    num_cells=2,
    edge_slots=(2, 2),
    cloud_slots=3,
    users=(5, 5),
    num_files=6,
    exponent=1.0,
    d=(20.0, 20.0),
    d0=100.0,
):
    """Tiny uniform-size model (1-byte files, slot-denominated caches)."""
    topology = Topology(num_cells, tuple(edge_slots), cloud_slots, tuple(users))
    cost = CostModel(tuple(d), d0)
    catalog = Catalog.uniform(num_files, 1, zipf_popularity(num_files, exponent))
    return validate_model(topology, cost, catalog)


def random_model(rng: random.Random, max_cells=4, max_files=8):
    """Random small model for property tests (uniform 1-byte files)."""
    num_cells = rng.randint(1, max_cells)
    num_files = rng.randint(2, max_files)
    edge_slots = tuple(rng.randint(0, 3) for _ in range(num_cells))
    cloud_slots = rng.randint(0, 4)
    users = [rng.randint(0, 4) for _ in range(num_cells)]
    if not any(users):
        users[0] = 1
    weights = [rng.random() + 0.05 for _ in range(num_files)]
    total = sum(weights)
    popularity = [w / total for w in weights]
    d = tuple(rng.uniform(1.0, 40.0) for _ in range(num_cells))
    d0 = max(d) + rng.uniform(5.0, 80.0)
    return validate_model(
        Topology(num_cells, edge_slots, cloud_slots, tuple(users)),
        CostModel(d, d0),
        Catalog.uniform(num_files, 1, popularity),
    )


def random_feasible_assignments(rng: random.Random, model, count):
    """Insertable (file, cache_index) pairs drawn at random, capacity-aware."""
    from chcsim.model import CachePlacement

    placement = CachePlacement(model.topology, model.catalog)
    pairs = [
        (f, c)
        for f in range(1, model.catalog.num_files + 1)
        for c in range(model.topology.num_cells + 1)
    ]
    rng.shuffle(pairs)
    chosen = []
    for file, cache in pairs:
        if len(chosen) >= count:
            break
        if model.catalog.size_of(file) <= placement.free_bytes(cache):
            placement.insert(file, cache)
            chosen.append((file, cache))
    return chosen


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
