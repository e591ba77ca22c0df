"""Shortest-path routing over the road graph, plus geometric primitives.

The graph is undirected with segment lengths as weights. Distances come
from scipy's Dijkstra (C implementation); path reconstruction walks the
shortest-path DAG preferring the lexicographically smallest junction-id
sequence, which makes results fully deterministic among equal-length
routes. Both route totals and DAG membership use bit-exact float
equality, so a route's total_length always equals the ordered sum of its
step lengths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .geo import bearing, haversine, quantize_direction  # re-exported  # noqa: F401
from .map_core import CityMap, GeoPoint

# Maps up to this many junctions get a cached all-pairs distance matrix.
_ALL_PAIRS_LIMIT = 2500


class RoutingError(Exception):
    pass


class UnreachableError(RoutingError):
    """Destination is not reachable from the origin."""


def point_distance(a: GeoPoint, b: GeoPoint) -> float:
    return haversine(a.lon, a.lat, b.lon, b.lat)


def point_bearing(a: GeoPoint, b: GeoPoint) -> float:
    return bearing(a.lon, a.lat, b.lon, b.lat)


@dataclass(frozen=True)
class RouteStep:
    road_name: str
    direction: str  # one of the 8 compass sectors
    length_m: float
    from_junction: str
    to_junction: str


@dataclass(frozen=True)
class Route:
    steps: tuple[RouteStep, ...]
    total_length: float

    @property
    def junction_sequence(self) -> tuple[str, ...]:
        if not self.steps:
            return ()
        return (self.steps[0].from_junction,) + tuple(s.to_junction for s in self.steps)


class RoadGraph:
    """Routable view of a CityMap: junctions as nodes, segments as edges."""

    def __init__(self, city: CityMap):
        self.city = city
        self.nodes: list[str] = sorted(city.junctions)  # index order == lex order
        self._idx = {jid: i for i, jid in enumerate(self.nodes)}
        self.node_location = {jid: city.junctions[jid].location for jid in self.nodes}

        # adjacency: node id -> sorted list of (neighbor id, segment id)
        self.adjacency: dict[str, list[tuple[str, str]]] = {j: [] for j in self.nodes}
        # minimum segment length per unordered junction pair
        self._pair_weight: dict[tuple[int, int], float] = {}
        self._pair_segments: dict[tuple[int, int], list[str]] = {}
        for rid in sorted(city.roads):
            seg = city.roads[rid]
            u, v = seg.from_junction, seg.to_junction
            if u == v:
                continue  # self-loops never lie on a shortest path
            self.adjacency[u].append((v, rid))
            self.adjacency[v].append((u, rid))
            key = (min(self._idx[u], self._idx[v]), max(self._idx[u], self._idx[v]))
            self._pair_segments.setdefault(key, []).append(rid)
            w = seg.length_m
            if key not in self._pair_weight or w < self._pair_weight[key]:
                self._pair_weight[key] = w
        for j in self.nodes:
            self.adjacency[j].sort()

        n = len(self.nodes)
        rows, cols, data = [], [], []
        for (i, j), w in self._pair_weight.items():
            rows.extend((i, j))
            cols.extend((j, i))
            data.extend((w, w))
        self._csr = csr_matrix((data, (rows, cols)), shape=(n, n))
        self._dist_rows: dict[int, np.ndarray] = {}
        self._dag_cache: dict[int, dict[int, list[int]]] = {}
        self._all_pairs: Optional[np.ndarray] = None

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return sum(len(v) for v in self.adjacency.values()) // 2

    def _neighbors_idx(self, i: int) -> list[tuple[int, float]]:
        jid = self.nodes[i]
        out = []
        seen = set()
        for nb, _rid in self.adjacency[jid]:
            k = self._idx[nb]
            if k in seen:
                continue
            seen.add(k)
            key = (min(i, k), max(i, k))
            out.append((k, self._pair_weight[key]))
        return out

    def dist_row(self, origin: str) -> np.ndarray:
        """Shortest-path distances from origin to every node (meters)."""
        i = self._idx[origin]
        if self._all_pairs is not None:
            return self._all_pairs[i]
        if i in self._dist_rows:
            return self._dist_rows[i]
        if self.node_count <= _ALL_PAIRS_LIMIT:
            self._all_pairs = _csgraph_dijkstra(self._csr, directed=True)
            return self._all_pairs[i]
        row = _csgraph_dijkstra(self._csr, directed=True, indices=i)
        self._dist_rows[i] = row
        return row

    def distance_matrix(self) -> np.ndarray:
        if self._all_pairs is None:
            self._all_pairs = _csgraph_dijkstra(self._csr, directed=True)
        return self._all_pairs

    def _dag_successors(self, origin_idx: int) -> dict[int, list[int]]:
        """Successor lists of the shortest-path DAG rooted at origin.

        Edge (u, v) belongs to the DAG iff dist[u] + w(u, v) == dist[v]
        bit-exactly, which always holds for the Dijkstra tree edges.
        """
        cached = self._dag_cache.get(origin_idx)
        if cached is not None:
            return cached
        dist = self.dist_row(self.nodes[origin_idx])
        succ: dict[int, list[int]] = {}
        for (i, j), w in self._pair_weight.items():
            di, dj = dist[i], dist[j]
            if np.isfinite(di) and di + w == dj:
                succ.setdefault(i, []).append(j)
            if np.isfinite(dj) and dj + w == di:
                succ.setdefault(j, []).append(i)
        for lst in succ.values():
            lst.sort()
        if len(self._dag_cache) > 8192:
            self._dag_cache.clear()
        self._dag_cache[origin_idx] = succ
        return succ

    def has_node(self, junction_id: str) -> bool:
        return junction_id in self._idx


def build_road_graph(city: CityMap) -> RoadGraph:
    return RoadGraph(city)


def _step_between(graph: RoadGraph, u: str, v: str) -> RouteStep:
    iu, iv = graph._idx[u], graph._idx[v]
    key = (min(iu, iv), max(iu, iv))
    w = graph._pair_weight[key]
    seg_id = min(
        s for s in graph._pair_segments[key] if graph.city.roads[s].length_m == w
    )
    seg = graph.city.roads[seg_id]
    a = graph.node_location[u]
    b = graph.node_location[v]
    return RouteStep(
        road_name=seg.name,
        direction=quantize_direction(bearing(a.lon, a.lat, b.lon, b.lat)),
        length_m=w,
        from_junction=u,
        to_junction=v,
    )


def shortest_path(graph: RoadGraph, origin: str, dest: str) -> Route:
    """Minimum-length route; ties broken by lexicographically smallest
    junction-id sequence. Returns an empty route when origin == dest."""
    for j in (origin, dest):
        if not graph.has_node(j):
            raise RoutingError(f"unknown junction {j!r}")
    if origin == dest:
        return Route(steps=(), total_length=0.0)

    dist = graph.dist_row(origin)
    o_idx, d_idx = graph._idx[origin], graph._idx[dest]
    if not np.isfinite(dist[d_idx]):
        raise UnreachableError(f"{dest!r} is unreachable from {origin!r}")

    succ = graph._dag_successors(o_idx)
    # DFS preferring the smallest junction id; node indices are assigned in
    # lexicographic id order, so integer order is id order. Dead-end memoization
    # keeps the walk linear; the DAG is acyclic (positive weights).
    dead: set[int] = set()
    path = [o_idx]
    iters = [iter(succ.get(o_idx, ()))]
    found = False
    while iters:
        nxt = next(iters[-1], None)
        if nxt is None:
            dead.add(path.pop())
            iters.pop()
            continue
        if nxt in dead:
            continue
        if nxt == d_idx:
            path.append(nxt)
            found = True
            break
        path.append(nxt)
        iters.append(iter(succ.get(nxt, ())))
    if not found:  # cannot happen when dist[dest] is finite
        raise UnreachableError(f"no DAG path from {origin!r} to {dest!r}")

    ids = [graph.nodes[i] for i in path]
    steps = tuple(_step_between(graph, u, v) for u, v in zip(ids, ids[1:]))
    return Route(steps=steps, total_length=float(dist[d_idx]))


def shortest_path_length(graph: RoadGraph, origin: str, dest: str) -> float:
    """Length in meters, or +inf when unreachable."""
    for j in (origin, dest):
        if not graph.has_node(j):
            raise RoutingError(f"unknown junction {j!r}")
    return float(graph.dist_row(origin)[graph._idx[dest]])
