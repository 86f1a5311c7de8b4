import random

import pytest

from chcsim.model import (
    Architecture,
    CacheId,
    CachePlacement,
    CapacityError,
    Catalog,
    CostModel,
    Topology,
    validate_model,
)
from chcsim.objective import (
    PlacementEvaluator,
    delay_saving,
    expected_cell_delay,
    marginal_gain,
    serving_cost,
    total_expected_delay,
)

from conftest import ALL_MODES, random_feasible_assignments, random_model, small_model
from reference import (
    plain_contents,
    ref_cell_delay,
    ref_delay_saving,
    ref_latency,
    ref_total_delay,
)

CHC = Architecture.CHC


class TestServingCost:
    def setup_method(self):
        self.model = small_model(num_cells=2, edge_slots=(3, 3), cloud_slots=3)

    def _placement(self):
        return CachePlacement(self.model.topology, self.model.catalog)

    def test_local_hit_is_free(self):
        placement = self._placement()
        placement.insert(1, 1)
        decision = serving_cost(placement, 1, 1, self.model.cost, CHC)
        assert decision.latency_ms == 0.0
        assert decision.local_hit
        assert decision.source == CacheId.edge(1)

    def test_cloud_hit_costs_fronthaul(self):
        placement = self._placement()
        placement.insert(1, 0)
        decision = serving_cost(placement, 1, 1, self.model.cost, CHC)
        assert decision.latency_ms == 20.0
        assert decision.source == CacheId.cloud()
        assert not decision.local_hit

    def test_neighbor_hit_costs_uturn(self):
        # d_rk = d_r + d_k = 20 + 20
        placement = self._placement()
        placement.insert(1, 2)
        decision = serving_cost(placement, 1, 1, self.model.cost, CHC)
        assert decision.latency_ms == 40.0
        assert decision.source == CacheId.edge(2)

    def test_empty_placement_goes_to_origin(self):
        decision = serving_cost(self._placement(), 1, 1, self.model.cost, CHC)
        assert decision.latency_ms == 100.0
        assert decision.source == CacheId.origin()

    def test_preference_order_on_full_replication(self):
        placement = self._placement()
        placement.insert(1, 0)
        placement.insert(1, 1)
        placement.insert(1, 2)
        assert serving_cost(placement, 1, 1, self.model.cost, CHC).source == CacheId.edge(1)
        placement.remove(1, 1)
        assert serving_cost(placement, 1, 1, self.model.cost, CHC).source == CacheId.cloud()

    def test_equal_cost_neighbors_break_by_lowest_cell(self):
        model = small_model(
            num_cells=3,
            edge_slots=(3, 3, 3),
            cloud_slots=0,
            users=(1, 1, 1),
            d=(20.0, 20.0, 20.0),
        )
        placement = CachePlacement(model.topology, model.catalog)
        placement.insert(1, 3)
        placement.insert(1, 2)
        decision = serving_cost(placement, 1, 1, model.cost, CHC)
        assert decision.source == CacheId.edge(2)

    def test_mode_visibility(self):
        placement = self._placement()
        placement.insert(1, 0)  # cloud only
        placement.insert(2, 2)  # neighbor only (from cell 1's view)
        cost = self.model.cost
        assert serving_cost(placement, 1, 1, cost, Architecture.EDGE_ONLY).source == CacheId.origin()
        assert serving_cost(placement, 1, 2, cost, Architecture.NON_COOP).source == CacheId.origin()
        assert serving_cost(placement, 1, 2, cost, CHC).source == CacheId.edge(2)
        assert serving_cost(placement, 2, 2, cost, Architecture.CLOUD_ONLY).source == CacheId.origin()

    def test_matches_reference_on_random_placements(self):
        rng = random.Random(11)
        for _ in range(30):
            model = random_model(rng)
            placement = CachePlacement(model.topology, model.catalog)
            for file, cache in random_feasible_assignments(rng, model, 6):
                placement.insert(file, cache)
            contents = plain_contents(placement)
            d = list(model.cost.cloud_to_edge_ms)
            for mode in ALL_MODES:
                for cell in range(1, model.topology.num_cells + 1):
                    for file in range(1, model.catalog.num_files + 1):
                        expected = ref_latency(contents, cell, file, d, model.cost.origin_ms, mode.value)
                        got = serving_cost(placement, cell, file, model.cost, mode)
                        assert got.latency_ms == pytest.approx(expected, abs=1e-12)

    def test_relabeling_symmetry(self):
        # two files with equal popularity and equal placement status serve identically
        model = small_model(num_files=4, exponent=0.0)
        placement = CachePlacement(model.topology, model.catalog)
        placement.insert(2, 0)
        placement.insert(3, 0)
        a = serving_cost(placement, 1, 2, model.cost, CHC)
        b = serving_cost(placement, 1, 3, model.cost, CHC)
        assert (a.latency_ms, a.local_hit) == (b.latency_ms, b.local_hit)


class TestExpectedDelay:
    def test_empty_placement_costs_origin_everywhere(self):
        model = small_model(num_files=4, exponent=0.0)  # dyadic popularity, exact sums
        placement = CachePlacement(model.topology, model.catalog)
        assert expected_cell_delay(placement, 1, model.catalog, model.cost, CHC) == 100.0

    def test_full_local_replication_is_free(self):
        model = small_model(num_cells=1, edge_slots=(6,), users=(3,), d=(20.0,))
        placement = CachePlacement(model.topology, model.catalog)
        for f in range(1, 7):
            placement.insert(f, 1)
        assert expected_cell_delay(placement, 1, model.catalog, model.cost, CHC) == 0.0

    def test_two_file_hand_example(self):
        # p = [0.8, 0.2]; file 1 local, file 2 in cloud, d_r = 20:
        # 0.8 * 0 + 0.2 * 20 = 4 ms
        topology = Topology(1, (2,), 2, (1,))
        cost = CostModel((20.0,), 100.0)
        catalog = Catalog.uniform(2, 1, [0.8, 0.2])
        validate_model(topology, cost, catalog)
        placement = CachePlacement(topology, catalog)
        placement.insert(1, 1)
        placement.insert(2, 0)
        assert expected_cell_delay(placement, 1, catalog, cost, CHC) == pytest.approx(4.0)

    def test_total_delay_matches_per_user_enumeration(self):
        rng = random.Random(23)
        for _ in range(25):
            model = random_model(rng)
            placement = CachePlacement(model.topology, model.catalog)
            for file, cache in random_feasible_assignments(rng, model, 5):
                placement.insert(file, cache)
            contents = plain_contents(placement)
            for mode in ALL_MODES:
                expected = ref_total_delay(
                    contents,
                    model.topology.users_per_cell,
                    model.catalog.popularity.tolist(),
                    list(model.cost.cloud_to_edge_ms),
                    model.cost.origin_ms,
                    mode.value,
                )
                got = total_expected_delay(
                    placement, model.topology, model.catalog, model.cost, mode
                )
                assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_single_cell_single_user_equals_cell_delay(self):
        model = small_model(num_cells=1, edge_slots=(2,), users=(1,), d=(20.0,))
        placement = CachePlacement(model.topology, model.catalog)
        placement.insert(1, 1)
        assert total_expected_delay(
            placement, model.topology, model.catalog, model.cost, CHC
        ) == expected_cell_delay(placement, 1, model.catalog, model.cost, CHC)


class TestDelaySaving:
    def test_empty_placement_saves_nothing(self):
        model = small_model()
        placement = CachePlacement(model.topology, model.catalog)
        assert delay_saving(placement, model.topology, model.catalog, model.cost, CHC) == 0.0

    def test_full_edge_replication_saves_everything(self):
        model = small_model(num_cells=2, edge_slots=(6, 6), users=(4, 3), num_files=6)
        placement = CachePlacement(model.topology, model.catalog)
        for r in (1, 2):
            for f in range(1, 7):
                placement.insert(f, r)
        saving = delay_saving(placement, model.topology, model.catalog, model.cost, CHC)
        assert saving == pytest.approx(7 * 100.0, rel=1e-12)

    def test_matches_reference_on_random_placements(self):
        rng = random.Random(37)
        for _ in range(25):
            model = random_model(rng)
            placement = CachePlacement(model.topology, model.catalog)
            for file, cache in random_feasible_assignments(rng, model, 5):
                placement.insert(file, cache)
            expected = ref_delay_saving(
                plain_contents(placement),
                model.topology.users_per_cell,
                model.catalog.popularity.tolist(),
                list(model.cost.cloud_to_edge_ms),
                model.cost.origin_ms,
                "chc",
            )
            got = delay_saving(placement, model.topology, model.catalog, model.cost, CHC)
            assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)


class TestMarginalGain:
    def test_closed_form_on_empty_placement(self):
        # gain of (file i -> edge r) from empty:
        # users[r]*p_i*d0 + sum_{k != r} users[k]*p_i*(d0 - d_kr)
        model = small_model(
            num_cells=3,
            edge_slots=(2, 2, 2),
            cloud_slots=2,
            users=(4, 2, 1),
            d=(10.0, 20.0, 30.0),
            num_files=4,
        )
        placement = CachePlacement(model.topology, model.catalog)
        p = model.catalog.popularity.tolist()
        d = model.cost.cloud_to_edge_ms
        d0 = model.cost.origin_ms
        users = model.topology.users_per_cell
        for file in (1, 3):
            for r in (1, 2, 3):
                expected = users[r - 1] * p[file - 1] * d0
                for k in (1, 2, 3):
                    if k != r:
                        expected += users[k - 1] * p[file - 1] * (d0 - (d[k - 1] + d[r - 1]))
                got = marginal_gain(
                    placement, (file, CacheId.edge(r)), model.topology, model.catalog, model.cost, CHC
                )
                assert got == pytest.approx(expected, rel=1e-12)

    def test_zero_gain_when_served_locally_everywhere(self):
        model = small_model(num_cells=2, edge_slots=(6, 6), cloud_slots=3, num_files=6)
        placement = CachePlacement(model.topology, model.catalog)
        for r in (1, 2):
            for f in range(1, 7):
                placement.insert(f, r)
        assert marginal_gain(placement, (1, 0), model.topology, model.catalog, model.cost, CHC) == 0.0

    def test_capacity_error(self):
        model = small_model(cloud_slots=0)
        placement = CachePlacement(model.topology, model.catalog)
        with pytest.raises(CapacityError):
            marginal_gain(placement, (1, 0), model.topology, model.catalog, model.cost, CHC)

    def test_gain_equals_saving_difference(self):
        rng = random.Random(5)
        for _ in range(30):
            model = random_model(rng)
            placement = CachePlacement(model.topology, model.catalog)
            for file, cache in random_feasible_assignments(rng, model, 4):
                placement.insert(file, cache)
            mode = rng.choice(ALL_MODES)
            candidates = [
                (f, c)
                for f in range(1, model.catalog.num_files + 1)
                for c in range(model.topology.num_cells + 1)
                if not placement.contains(c, f)
                and model.catalog.size_of(f) <= placement.free_bytes(c)
            ]
            if not candidates:
                continue
            file, cache = rng.choice(candidates)
            before = delay_saving(placement, model.topology, model.catalog, model.cost, mode)
            gain = marginal_gain(
                placement, (file, cache), model.topology, model.catalog, model.cost, mode
            )
            placement.insert(file, cache)
            after = delay_saving(placement, model.topology, model.catalog, model.cost, mode)
            assert gain == pytest.approx(after - before, rel=1e-9, abs=1e-9)


class TestEvaluatorConsistency:
    def test_incremental_matches_scratch(self):
        rng = random.Random(91)
        for _ in range(20):
            model = random_model(rng)
            mode = rng.choice(ALL_MODES)
            evaluator = PlacementEvaluator(model.topology, model.catalog, model.cost, mode)
            inserted = []
            for file, cache in random_feasible_assignments(rng, model, 6):
                evaluator.insert(file, cache)
                inserted.append((file, cache))
            # occasionally remove some again
            for file, cache in inserted[: len(inserted) // 2]:
                evaluator.remove(file, cache)
            fresh = PlacementEvaluator(
                model.topology, model.catalog, model.cost, mode, placement=evaluator.placement.copy()
            )
            for cell in range(1, model.topology.num_cells + 1):
                for file in range(1, model.catalog.num_files + 1):
                    assert evaluator.serving_latency(cell, file) == pytest.approx(
                        fresh.serving_latency(cell, file), abs=1e-12
                    )
            assert evaluator.delay_saving() == pytest.approx(
                fresh.delay_saving(), rel=1e-9, abs=1e-9
            )
            assert evaluator.delay_saving() == pytest.approx(
                evaluator.delay_saving_recomputed(), rel=1e-9, abs=1e-9
            )
            stateless = delay_saving(
                evaluator.placement, model.topology, model.catalog, model.cost, mode
            )
            assert evaluator.delay_saving() == pytest.approx(stateless, rel=1e-9, abs=1e-9)

    def test_evaluator_gain_matches_stateless(self):
        rng = random.Random(13)
        for _ in range(20):
            model = random_model(rng)
            mode = rng.choice(ALL_MODES)
            evaluator = PlacementEvaluator(model.topology, model.catalog, model.cost, mode)
            for file, cache in random_feasible_assignments(rng, model, 4):
                evaluator.insert(file, cache)
            for file in range(1, model.catalog.num_files + 1):
                for cache in range(model.topology.num_cells + 1):
                    if evaluator.placement.contains(cache, file):
                        continue
                    if model.catalog.size_of(file) > evaluator.placement.free_bytes(cache):
                        continue
                    expected = marginal_gain(
                        evaluator.placement, (file, cache), model.topology, model.catalog,
                        model.cost, mode,
                    )
                    assert evaluator.insert_gain(file, cache) == pytest.approx(
                        expected, rel=1e-9, abs=1e-12
                    )


class TestStructuralProperties:
    def _random_nested_placements(self, rng, model):
        small = CachePlacement(model.topology, model.catalog)
        pairs = random_feasible_assignments(rng, model, 8)
        cut = rng.randint(0, len(pairs))
        for file, cache in pairs[:cut]:
            small.insert(file, cache)
        big = small.copy()
        for file, cache in pairs[cut:]:
            big.insert(file, cache)
        return small, big, pairs

    def test_monotonicity(self):
        rng = random.Random(17)
        for _ in range(60):
            model = random_model(rng)
            mode = rng.choice(ALL_MODES)
            small, big, _ = self._random_nested_placements(rng, model)
            s_small = delay_saving(small, model.topology, model.catalog, model.cost, mode)
            s_big = delay_saving(big, model.topology, model.catalog, model.cost, mode)
            assert s_small <= s_big + 1e-9

    def test_submodularity(self):
        rng = random.Random(29)
        checked = 0
        while checked < 60:
            model = random_model(rng)
            mode = rng.choice(ALL_MODES)
            small, big, _ = self._random_nested_placements(rng, model)
            extras = [
                (f, c)
                for f in range(1, model.catalog.num_files + 1)
                for c in range(model.topology.num_cells + 1)
                if not big.contains(c, f)
                and model.catalog.size_of(f) <= big.free_bytes(c)
            ]
            if not extras:
                continue
            file, cache = rng.choice(extras)
            g_small = marginal_gain(
                small, (file, cache), model.topology, model.catalog, model.cost, mode
            )
            g_big = marginal_gain(
                big, (file, cache), model.topology, model.catalog, model.cost, mode
            )
            assert g_small >= g_big - 1e-9
            checked += 1

    def test_mode_visibility_latency_ordering(self):
        # for a fixed placement each request: CHC <= NonCoop <= EdgeOnly
        rng = random.Random(41)
        for _ in range(20):
            model = random_model(rng)
            placement = CachePlacement(model.topology, model.catalog)
            for file, cache in random_feasible_assignments(rng, model, 6):
                placement.insert(file, cache)
            for cell in range(1, model.topology.num_cells + 1):
                for file in range(1, model.catalog.num_files + 1):
                    chc = serving_cost(placement, cell, file, model.cost, CHC).latency_ms
                    noncoop = serving_cost(
                        placement, cell, file, model.cost, Architecture.NON_COOP
                    ).latency_ms
                    edgeonly = serving_cost(
                        placement, cell, file, model.cost, Architecture.EDGE_ONLY
                    ).latency_ms
                    assert chc <= noncoop <= edgeonly
