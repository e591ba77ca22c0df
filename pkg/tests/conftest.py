from __future__ import annotations

import json
import math
import random

import pytest

from citykit.geo import haversine, offset_lonlat
from citykit.map_core import CityMap, GeoPoint, Junction, RoadSegment, import_map
from citykit.routing import RoadGraph, build_road_graph
from citykit.synthcity import generate_city, generate_city_records, write_city_jsonl

CENTER = (8.30, 47.05)


def pt(east_m: float, north_m: float) -> GeoPoint:
    lon, lat = offset_lonlat(CENTER[0], CENTER[1], east_m, north_m)
    return GeoPoint(lon, lat)


def road_record(rid, name, jid_a, jid_b, a: GeoPoint, b: GeoPoint) -> dict:
    return {
        "type": "road",
        "id": rid,
        "name": name,
        "from": jid_a,
        "to": jid_b,
        "polyline": [[a.lon, a.lat], [b.lon, b.lat]],
        "length_m": haversine(a.lon, a.lat, b.lon, b.lat),
    }


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


@pytest.fixture
def square_map_records():
    """4 junctions on a ~300 m square, 4 roads, 3 PoIs, 1 AoI."""
    j = {
        "J1": pt(0, 0),
        "J2": pt(300, 0),
        "J3": pt(300, 300),
        "J4": pt(0, 300),
    }
    records = [
        {"type": "junction", "id": k, "lon": p.lon, "lat": p.lat}
        for k, p in j.items()
    ]
    records += [
        road_record("R1", "South Road", "J1", "J2", j["J1"], j["J2"]),
        road_record("R2", "East Road", "J2", "J3", j["J2"], j["J3"]),
        road_record("R3", "North Road", "J3", "J4", j["J3"], j["J4"]),
        road_record("R4", "West Road", "J4", "J1", j["J4"], j["J1"]),
    ]
    for pid, name, cat, p in [
        ("P1", "Corner Cafe", "food", pt(40, 40)),
        ("P2", "Middle Market", "shopping", pt(150, 150)),
        ("P3", "North Clinic", "medical", pt(260, 260)),
    ]:
        records.append(
            {"type": "poi", "id": pid, "name": name, "category": cat,
             "lon": p.lon, "lat": p.lat}
        )
    corners = [pt(100, 100), pt(200, 100), pt(200, 200), pt(100, 200)]
    records.append(
        {
            "type": "aoi",
            "id": "A1",
            "name": "Middle Block",
            "boundary": [[c.lon, c.lat] for c in corners],
            "pois": ["P2"],
        }
    )
    return records


@pytest.fixture
def square_map_path(tmp_path, square_map_records):
    path = tmp_path / "square.jsonl"
    write_jsonl(path, square_map_records)
    return path


@pytest.fixture
def square_city(square_map_path) -> CityMap:
    return import_map(square_map_path)


@pytest.fixture
def elm_city(tmp_path) -> CityMap:
    """Two junctions, one 200 m east-west road named Elm St."""
    j1, j2 = pt(0, 0), pt(200, 0)
    records = [
        {"type": "junction", "id": "J1", "lon": j1.lon, "lat": j1.lat},
        {"type": "junction", "id": "J2", "lon": j2.lon, "lat": j2.lat},
        road_record("R1", "Elm St", "J1", "J2", j1, j2),
    ]
    path = tmp_path / "elm.jsonl"
    write_jsonl(path, records)
    return import_map(path)


@pytest.fixture(scope="session")
def city_small() -> CityMap:
    return generate_city(400, seed=11)


@pytest.fixture(scope="session")
def graph_small(city_small) -> RoadGraph:
    return build_road_graph(city_small)


@pytest.fixture(scope="session")
def city5k() -> CityMap:
    return generate_city(5000, seed=0)


@pytest.fixture(scope="session")
def graph5k(city5k) -> RoadGraph:
    return build_road_graph(city5k)


@pytest.fixture(scope="session")
def city5k_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("map") / "city5k.jsonl"
    write_city_jsonl(generate_city_records(5000, seed=0), path)
    return path


# ---------------------------------------------------------------------------
# Abstract weighted graphs for routing oracles
# ---------------------------------------------------------------------------

def make_graph_city(n_nodes: int, edges: list[tuple[int, int, float]]):
    """CityMap/RoadGraph from an abstract weighted graph; lengths are taken
    from the edge weights (geometry is only used for directions)."""
    junctions = {}
    locs = {}
    for i in range(n_nodes):
        ang = 2 * math.pi * i / max(n_nodes, 1)
        p = pt(5000 * math.cos(ang), 5000 * math.sin(ang))
        jid = f"N{i:02d}"
        locs[jid] = p
        junctions[jid] = Junction(id=jid, location=p, incident_roads=())
    roads = {}
    for k, (u, v, w) in enumerate(edges):
        rid = f"E{k:03d}"
        ju, jv = f"N{u:02d}", f"N{v:02d}"
        roads[rid] = RoadSegment(
            id=rid,
            name=f"Road {k}",
            from_junction=ju,
            to_junction=jv,
            polyline=(locs[ju], locs[jv]),
            length_m=float(w),
        )
    city = CityMap(pois={}, aois={}, junctions=junctions, roads=roads)
    return city, build_road_graph(city)


def random_connected_graph(rng: random.Random, max_nodes: int = 10):
    """Random connected undirected graph with integer weights."""
    n = rng.randint(2, max_nodes)
    edges = []
    for v in range(1, n):  # random spanning tree
        u = rng.randrange(v)
        edges.append((u, v, rng.randint(1, 20)))
    extra = rng.randint(0, n)
    for _ in range(extra):
        u, v = rng.sample(range(n), 2)
        edges.append((u, v, rng.randint(1, 20)))
    return n, edges


def brute_force_shortest(
    n_nodes: int, edges: list[tuple[int, int, float]], origin: int, dest: int
):
    """Exhaustive minimum over all simple paths: (ordered float sum, id path).

    Among equal-length paths, returns the lexicographically smallest node-id
    sequence (ids formatted as in make_graph_city).
    """
    adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(n_nodes)}
    for u, v, w in edges:
        adj[u].append((v, float(w)))
        adj[v].append((u, float(w)))
    best: list = [math.inf, None]

    def ids(path):
        return tuple(f"N{i:02d}" for i in path)

    def dfs(node, dist, path, seen):
        if dist > best[0]:
            return
        if node == dest:
            if dist < best[0] or (dist == best[0] and ids(path) < best[1]):
                best[0] = dist
                best[1] = ids(path)
            return
        for nb, w in sorted(adj[node]):
            if nb not in seen:
                seen.add(nb)
                path.append(nb)
                dfs(nb, dist + w, path, seen)
                path.pop()
                seen.remove(nb)

    dfs(origin, 0.0, [origin], {origin})
    return best[0], best[1]
