from __future__ import annotations

import math
import random

import pytest

from citykit.geo import (
    COMPASS,
    bearing,
    bearing_from_east_north,
    haversine,
    quantize_direction,
)
from citykit.routing import RoutingError, UnreachableError, shortest_path

from conftest import brute_force_shortest, make_graph_city, random_connected_graph


class TestHaversine:
    def test_zero_for_coincident_points(self):
        assert haversine(8.3, 47.05, 8.3, 47.05) == 0.0

    def test_one_degree_longitude_at_equator(self):
        # closed form: R * pi / 180
        assert haversine(0.0, 0.0, 1.0, 0.0) == pytest.approx(111194.9, abs=0.1)

    def test_symmetry(self):
        rng = random.Random(42)
        for _ in range(100):
            lon1, lat1 = rng.uniform(-180, 180), rng.uniform(-85, 85)
            lon2, lat2 = rng.uniform(-180, 180), rng.uniform(-85, 85)
            assert haversine(lon1, lat1, lon2, lat2) == haversine(lon2, lat2, lon1, lat1)


class TestBearing:
    def test_due_north(self):
        assert bearing(8.3, 47.0, 8.3, 47.1) == pytest.approx(0.0, abs=1e-9)

    def test_due_east_at_equator(self):
        assert bearing(0.0, 0.0, 1.0, 0.0) == pytest.approx(90.0, abs=1e-9)

    def test_small_offset_matches_planar_atan2(self):
        assert bearing(0.0, 0.0, 1.0, 3.0) == pytest.approx(18.43, abs=0.1)

    def test_coincident_points_raise(self):
        with pytest.raises(ValueError):
            bearing(1.0, 2.0, 1.0, 2.0)


class TestQuantizeDirection:
    @pytest.mark.parametrize(
        "deg,expect",
        [(0.0, "N"), (22.5, "NE"), (359.9, "N"), (45.0, "NE"), (67.5, "E"),
         (90.0, "E"), (180.0, "S"), (270.0, "W"), (337.5, "N"), (337.4, "NW")],
    )
    def test_sector_mapping(self, deg, expect):
        assert quantize_direction(deg) == expect

    def test_partition_no_gaps_or_overlaps(self):
        # every tenth of a degree maps to exactly one sector, adjacent
        # sectors switch exactly at the 22.5 + 45k boundaries
        last = None
        switches = 0
        for tenth in range(3600):
            sector = quantize_direction(tenth / 10.0)
            assert sector in COMPASS
            if sector != last:
                switches += 1
                last = sector
        assert switches == 9  # initial N plus 8 boundary crossings

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            quantize_direction(360.0)
        with pytest.raises(ValueError):
            quantize_direction(-0.1)

    def test_net_bearing_helper(self):
        assert quantize_direction(bearing_from_east_north(100.0, 300.0)) == "N"
        assert quantize_direction(bearing_from_east_north(300.0, 100.0)) == "E"


class TestShortestPath:
    def test_origin_equals_dest_empty_route(self):
        _, graph = make_graph_city(3, [(0, 1, 3.0), (1, 2, 4.0)])
        route = shortest_path(graph, "N00", "N00")
        assert route.steps == () and route.total_length == 0.0

    def test_triangle_goes_via_middle(self):
        _, graph = make_graph_city(3, [(0, 1, 3.0), (1, 2, 4.0), (0, 2, 10.0)])
        route = shortest_path(graph, "N00", "N02")
        assert route.total_length == 7.0
        assert route.junction_sequence == ("N00", "N01", "N02")

    def test_unreachable_raises(self):
        _, graph = make_graph_city(4, [(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(UnreachableError):
            shortest_path(graph, "N00", "N03")

    def test_unknown_junction_raises(self):
        _, graph = make_graph_city(2, [(0, 1, 1.0)])
        with pytest.raises(RoutingError):
            shortest_path(graph, "N00", "N09")

    def test_tie_break_lexicographic(self):
        # two equal 2.0 paths N00->N01->N03 and N00->N02->N03
        _, graph = make_graph_city(
            4, [(0, 1, 1.0), (1, 3, 1.0), (0, 2, 1.0), (2, 3, 1.0)]
        )
        route = shortest_path(graph, "N00", "N03")
        assert route.junction_sequence == ("N00", "N01", "N03")

    def test_total_equals_ordered_step_sum_exactly(self):
        rng = random.Random(7)
        for _ in range(50):
            n, edges = random_connected_graph(rng)
            _, graph = make_graph_city(n, edges)
            o, d = rng.sample(range(n), 2)
            route = shortest_path(graph, f"N{o:02d}", f"N{d:02d}")
            total = 0.0
            for step in route.steps:
                total += step.length_m
            assert total == route.total_length

    def test_matches_bruteforce_on_random_graphs(self):
        rng = random.Random(123)
        for _ in range(60):
            n, edges = random_connected_graph(rng)
            _, graph = make_graph_city(n, edges)
            o, d = rng.sample(range(n), 2)
            expect_len, expect_path = brute_force_shortest(n, edges, o, d)
            route = shortest_path(graph, f"N{o:02d}", f"N{d:02d}")
            assert route.total_length == expect_len
            assert route.junction_sequence == expect_path

    def test_step_directions_consistent_with_geometry(self):
        city, graph = make_graph_city(4, [(0, 1, 5.0), (1, 2, 5.0), (2, 3, 5.0)])
        route = shortest_path(graph, "N00", "N03")
        for step in route.steps:
            a = city.junctions[step.from_junction].location
            b = city.junctions[step.to_junction].location
            assert step.direction == quantize_direction(
                bearing(a.lon, a.lat, b.lon, b.lat)
            )

    def test_routing_triangle_inequality(self):
        rng = random.Random(5)
        n, edges = random_connected_graph(rng, max_nodes=10)
        _, graph = make_graph_city(n, edges)
        for _ in range(30):
            a, b, c = (rng.randrange(n) for _ in range(3))
            ab = shortest_path(graph, f"N{a:02d}", f"N{b:02d}").total_length
            bc = shortest_path(graph, f"N{b:02d}", f"N{c:02d}").total_length
            ac = shortest_path(graph, f"N{a:02d}", f"N{c:02d}").total_length
            assert ac <= ab + bc + 1e-9

    def test_route_symmetry_on_undirected_graph(self):
        rng = random.Random(9)
        for _ in range(20):
            n, edges = random_connected_graph(rng)
            _, graph = make_graph_city(n, edges)
            o, d = rng.sample(range(n), 2)
            fwd = shortest_path(graph, f"N{o:02d}", f"N{d:02d}")
            rev = shortest_path(graph, f"N{d:02d}", f"N{o:02d}")
            assert fwd.total_length == rev.total_length

    def test_node_and_edge_counts_match_map(self, city_small, graph_small):
        assert graph_small.node_count == len(city_small.junctions)
        assert graph_small.edge_count == len(city_small.roads)

    def test_parallel_edges_take_shorter(self):
        _, graph = make_graph_city(2, [(0, 1, 5.0), (0, 1, 3.0)])
        route = shortest_path(graph, "N00", "N01")
        assert route.total_length == 3.0
        assert route.steps[0].road_name == "Road 1"
