"""Immutable in-memory city model.

Loads the canonical map JSONL (junctions, roads, PoIs, AoIs) into a
CityMap with full referential integrity, a spatial index for disk and
k-nearest queries, and road-network based address reconstruction for
every PoI/AoI.

Canonical map JSONL, one entity per line:
    {"type":"junction","id":...,"lon":...,"lat":...}
    {"type":"road","id":...,"name":...,"from":jid,"to":jid,"polyline":[[lon,lat],...],"length_m":...}
    {"type":"poi","id":...,"name":...,"category":...,"lon":...,"lat":...}
    {"type":"aoi","id":...,"name":...,"boundary":[[lon,lat],...],"pois":[pid,...]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geo import EARTH_RADIUS_M, haversine, local_xy

DEFAULT_CATEGORIES = (
    "residential",
    "food",
    "shopping",
    "business",
    "education",
    "medical",
    "entertainment",
    "transport",
    "hotel",
    "sport",
    "culture",
    "public-service",
)

ENTITY_KINDS = ("poi", "aoi", "junction")

# Points closer than this to the road centerline count as "on" the road.
_ON_ROAD_EPS_M = 0.01


class MapError(Exception):
    """Base class for map loading and query errors."""


class MapFormatError(MapError):
    """A line of the map file failed to parse or validate."""


class MapDataError(MapError):
    """The map parsed but violates an integrity rule."""


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinate ({self.lon}, {self.lat})")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of [-90, 90]")


@dataclass(frozen=True)
class AddressDescriptor:
    """Position expressed relative to the road network.

    ``offset`` meters along ``road_name`` starting at ``anchor_junction``,
    with ``side`` relative to the walking direction away from the anchor.
    """

    road_name: str
    road_id: str
    anchor_junction: str
    offset: float
    side: str  # left | right | on


@dataclass(frozen=True)
class PoI:
    id: str
    name: str
    category: str
    location: GeoPoint
    address: Optional[AddressDescriptor] = None


@dataclass(frozen=True)
class AoI:
    id: str
    name: str
    boundary: tuple[GeoPoint, ...]
    contained_pois: tuple[str, ...]
    centroid: GeoPoint
    address: Optional[AddressDescriptor] = None


@dataclass(frozen=True)
class Junction:
    id: str
    location: GeoPoint
    incident_roads: tuple[str, ...]


@dataclass(frozen=True)
class RoadSegment:
    id: str
    name: str
    from_junction: str
    to_junction: str
    polyline: tuple[GeoPoint, ...]
    length_m: float

    def other_end(self, junction_id: str) -> str:
        if junction_id == self.from_junction:
            return self.to_junction
        if junction_id == self.to_junction:
            return self.from_junction
        raise KeyError(f"{junction_id} is not an endpoint of road {self.id}")


# ---------------------------------------------------------------------------
# Polygon helpers
# ---------------------------------------------------------------------------

def polygon_centroid(boundary: Sequence[GeoPoint]) -> GeoPoint:
    """Area centroid of a closed ring, computed in a local planar frame."""
    lon0, lat0 = boundary[0].lon, boundary[0].lat
    pts = [local_xy(lon0, lat0, p.lon, p.lat) for p in boundary]
    area2 = 0.0
    cx = 0.0
    cy = 0.0
    for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
        w = x1 * y2 - x2 * y1
        area2 += w
        cx += (x1 + x2) * w
        cy += (y1 + y2) * w
    if abs(area2) < 1e-9:  # degenerate ring: fall back to vertex mean
        cx = sum(p[0] for p in pts) / len(pts)
        cy = sum(p[1] for p in pts) / len(pts)
    else:
        cx /= 3.0 * area2
        cy /= 3.0 * area2
    lat = lat0 + math.degrees(cy / EARTH_RADIUS_M)
    lon = lon0 + math.degrees(cx / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return GeoPoint(lon, lat)


def point_in_polygon(point: GeoPoint, boundary: Sequence[GeoPoint]) -> bool:
    """Ray-casting containment test in the lon/lat plane (boundary-inclusive)."""
    x, y = point.lon, point.lat
    inside = False
    n = len(boundary)
    for i in range(n):
        x1, y1 = boundary[i].lon, boundary[i].lat
        x2, y2 = boundary[(i + 1) % n].lon, boundary[(i + 1) % n].lat
        if min(x1, x2) <= x <= max(x1, x2) and min(y1, y2) <= y <= max(y1, y2):
            cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
            if abs(cross) < 1e-18:
                return True  # on an edge
        if (y1 > y) != (y2 > y):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xint:
                inside = not inside
    return inside


def _segments_properly_intersect(a1, a2, b1, b2) -> bool:
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    o1 = orient(a1, a2, b1)
    o2 = orient(a1, a2, b2)
    o3 = orient(b1, b2, a1)
    o4 = orient(b1, b2, a2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def polygon_self_intersects(boundary: Sequence[GeoPoint]) -> bool:
    pts = [(p.lon, p.lat) for p in boundary]
    n = len(pts)
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex
            b1, b2 = pts[j], pts[(j + 1) % n]
            if _segments_properly_intersect(a1, a2, b1, b2):
                return True
    return False


def polyline_length_m(polyline: Sequence[GeoPoint]) -> float:
    return sum(
        haversine(a.lon, a.lat, b.lon, b.lat) for a, b in zip(polyline, polyline[1:])
    )


def polyline_walk(polyline: Sequence[GeoPoint], dist_m: float) -> GeoPoint:
    """Point reached after walking dist_m along the polyline (clamped to its ends)."""
    if dist_m <= 0:
        return polyline[0]
    remaining = dist_m
    for a, b in zip(polyline, polyline[1:]):
        leg = haversine(a.lon, a.lat, b.lon, b.lat)
        if remaining <= leg and leg > 0:
            t = remaining / leg
            return GeoPoint(a.lon + t * (b.lon - a.lon), a.lat + t * (b.lat - a.lat))
        remaining -= leg
    return polyline[-1]


# ---------------------------------------------------------------------------
# Spatial index
# ---------------------------------------------------------------------------

def _to_xyz(lons: np.ndarray, lats: np.ndarray) -> np.ndarray:
    lam = np.radians(lons)
    phi = np.radians(lats)
    return np.column_stack(
        (
            EARTH_RADIUS_M * np.cos(phi) * np.cos(lam),
            EARTH_RADIUS_M * np.cos(phi) * np.sin(lam),
            EARTH_RADIUS_M * np.sin(phi),
        )
    )


def _chord_for_arc(arc_m: float) -> float:
    half = min(arc_m / (2.0 * EARTH_RADIUS_M), math.pi / 2.0)
    return 2.0 * EARTH_RADIUS_M * math.sin(half)


class SpatialIndex:
    """KD-tree over unit-sphere embeddings, one tree per entity kind.

    Chord distance on the embedding is monotone in great-circle distance,
    so candidate sets from the tree are exact after a haversine filter.
    """

    def __init__(self, points_by_kind: dict[str, list[tuple[str, GeoPoint]]]):
        self._trees: dict[str, cKDTree] = {}
        self._ids: dict[str, list[str]] = {}
        self._lonlat: dict[str, np.ndarray] = {}
        for kind, items in points_by_kind.items():
            items = sorted(items, key=lambda it: it[0])
            if not items:
                continue
            ids = [i for i, _ in items]
            lons = np.array([p.lon for _, p in items])
            lats = np.array([p.lat for _, p in items])
            self._ids[kind] = ids
            self._lonlat[kind] = np.column_stack((lons, lats))
            self._trees[kind] = cKDTree(_to_xyz(lons, lats))

    def count(self, kind: str) -> int:
        return len(self._ids.get(kind, ()))

    def within(
        self, center: GeoPoint, radius_m: float, kinds: Iterable[str]
    ) -> list[tuple[str, str, float]]:
        """All entities of the given kinds with haversine distance <= radius_m,
        sorted by (distance, id)."""
        q = _to_xyz(np.array([center.lon]), np.array([center.lat]))[0]
        chord = _chord_for_arc(radius_m) * (1.0 + 1e-12) + 1e-9
        out = []
        for kind in kinds:
            tree = self._trees.get(kind)
            if tree is None:
                continue
            for idx in tree.query_ball_point(q, chord):
                lon, lat = self._lonlat[kind][idx]
                d = haversine(center.lon, center.lat, lon, lat)
                if d <= radius_m:
                    out.append((self._ids[kind][idx], kind, d))
        out.sort(key=lambda t: (t[2], t[0]))
        return out

    def nearest(
        self, center: GeoPoint, k: int, kinds: Iterable[str]
    ) -> list[tuple[str, str, float]]:
        """k nearest entities of the given kinds by haversine, ties broken by id."""
        q = _to_xyz(np.array([center.lon]), np.array([center.lat]))[0]
        cand = []
        for kind in kinds:
            tree = self._trees.get(kind)
            if tree is None:
                continue
            n = len(self._ids[kind])
            kk = min(k + 8, n)
            dists, idxs = tree.query(q, k=kk)
            if kk == 1:
                dists, idxs = [dists], [idxs]
            for idx in np.atleast_1d(idxs):
                lon, lat = self._lonlat[kind][int(idx)]
                d = haversine(center.lon, center.lat, lon, lat)
                cand.append((self._ids[kind][int(idx)], kind, d))
        cand.sort(key=lambda t: (t[2], t[0]))
        return cand[:k]


# ---------------------------------------------------------------------------
# Road geometry cache (vectorized point-to-polyline queries)
# ---------------------------------------------------------------------------

class _RoadGeometry:
    """Flat arrays of all polyline legs in one planar frame, for fast prefilter."""

    def __init__(self, roads: dict[str, RoadSegment], lon0: float, lat0: float):
        self.lon0 = lon0
        self.lat0 = lat0
        ax, ay, bx, by, seg_ids = [], [], [], [], []
        for rid in sorted(roads):
            seg = roads[rid]
            pts = [local_xy(lon0, lat0, p.lon, p.lat) for p in seg.polyline]
            for (x1, y1), (x2, y2) in zip(pts, pts[1:]):
                ax.append(x1)
                ay.append(y1)
                bx.append(x2)
                by.append(y2)
                seg_ids.append(rid)
        self.ax = np.array(ax)
        self.ay = np.array(ay)
        self.bx = np.array(bx)
        self.by = np.array(by)
        self.seg_ids = seg_ids

    def candidate_segments(self, point: GeoPoint, margin_m: float = 10.0) -> list[str]:
        """Segments whose legs come within (best + margin) of the point."""
        px, py = local_xy(self.lon0, self.lat0, point.lon, point.lat)
        dx = self.bx - self.ax
        dy = self.by - self.ay
        den = dx * dx + dy * dy
        t = np.where(den > 0, ((px - self.ax) * dx + (py - self.ay) * dy) / np.where(den > 0, den, 1.0), 0.0)
        t = np.clip(t, 0.0, 1.0)
        fx = self.ax + t * dx
        fy = self.ay + t * dy
        d = np.hypot(px - fx, py - fy)
        dmin = float(d.min())
        cutoff = dmin + margin_m + 0.005 * dmin
        keep = np.flatnonzero(d <= cutoff)
        return sorted({self.seg_ids[int(i)] for i in keep})


# ---------------------------------------------------------------------------
# CityMap
# ---------------------------------------------------------------------------

class CityMap:
    """Immutable world model: id-keyed entity collections plus derived indexes."""

    def __init__(
        self,
        pois: dict[str, PoI],
        aois: dict[str, AoI],
        junctions: dict[str, Junction],
        roads: dict[str, RoadSegment],
        categories: tuple[str, ...] = DEFAULT_CATEGORIES,
    ):
        self.pois = pois
        self.aois = aois
        self.junctions = junctions
        self.roads = roads
        self.categories = tuple(categories)
        self.bbox = self._compute_bbox()
        self.index = SpatialIndex(
            {
                "poi": [(p.id, p.location) for p in pois.values()],
                "aoi": [(a.id, a.centroid) for a in aois.values()],
                "junction": [(j.id, j.location) for j in junctions.values()],
            }
        )
        center_lon = (self.bbox[0] + self.bbox[2]) / 2.0
        center_lat = (self.bbox[1] + self.bbox[3]) / 2.0
        self._road_geometry = (
            _RoadGeometry(roads, center_lon, center_lat) if roads else None
        )
        self._poi_name_index: Optional[dict[str, str]] = None

    def _compute_bbox(self) -> tuple[float, float, float, float]:
        lons: list[float] = []
        lats: list[float] = []
        for p in self.pois.values():
            lons.append(p.location.lon)
            lats.append(p.location.lat)
        for a in self.aois.values():
            for v in a.boundary:
                lons.append(v.lon)
                lats.append(v.lat)
        for j in self.junctions.values():
            lons.append(j.location.lon)
            lats.append(j.location.lat)
        if not lons:
            return (0.0, 0.0, 0.0, 0.0)
        return (min(lons), min(lats), max(lons), max(lats))

    def entity_point(self, entity_id: str) -> GeoPoint:
        """Representative point of any entity (AoIs use their centroid)."""
        if entity_id in self.pois:
            return self.pois[entity_id].location
        if entity_id in self.aois:
            return self.aois[entity_id].centroid
        if entity_id in self.junctions:
            return self.junctions[entity_id].location
        raise KeyError(f"unknown entity id {entity_id!r}")

    def entity_name(self, entity_id: str) -> str:
        if entity_id in self.pois:
            return self.pois[entity_id].name
        if entity_id in self.aois:
            return self.aois[entity_id].name
        if entity_id in self.junctions:
            return f"junction {entity_id}"
        raise KeyError(f"unknown entity id {entity_id!r}")

    def poi_by_name(self, name: str) -> Optional[PoI]:
        if self._poi_name_index is None:
            idx: dict[str, str] = {}
            for pid in sorted(self.pois):
                key = " ".join(self.pois[pid].name.casefold().split())
                idx.setdefault(key, pid)
            self._poi_name_index = idx
        pid = self._poi_name_index.get(" ".join(name.casefold().split()))
        return self.pois[pid] if pid else None

    def road_names(self) -> list[str]:
        return sorted({r.name for r in self.roads.values()})

    def segments_of_road(self, name: str) -> list[RoadSegment]:
        return sorted(
            (r for r in self.roads.values() if r.name == name), key=lambda r: r.id
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, CityMap):
            return NotImplemented
        return (
            self.pois == other.pois
            and self.aois == other.aois
            and self.junctions == other.junctions
            and self.roads == other.roads
            and self.categories == other.categories
        )


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def reconstruct_address(point: GeoPoint, city: CityMap) -> AddressDescriptor:
    """Describe a point relative to the nearest road segment.

    Nearest segment by perpendicular distance to the polyline; anchor is the
    endpoint junction nearer along the road; side is the sign of the cross
    product of the walking direction (away from the anchor) with the offset
    vector, computed in a local planar frame at the anchor junction.
    """
    if not city.roads:
        raise MapDataError("address reconstruction requires at least one road")
    geom = city._road_geometry
    assert geom is not None
    candidates = geom.candidate_segments(point)

    best: Optional[tuple[float, str, int, float]] = None  # (dist, seg_id, leg, t)
    for seg_id in candidates:
        seg = city.roads[seg_id]
        pts = [local_xy(point.lon, point.lat, p.lon, p.lat) for p in seg.polyline]
        for i, ((x1, y1), (x2, y2)) in enumerate(zip(pts, pts[1:])):
            dx, dy = x2 - x1, y2 - y1
            den = dx * dx + dy * dy
            t = 0.0 if den == 0 else max(0.0, min(1.0, (-x1 * dx - y1 * dy) / den))
            fx, fy = x1 + t * dx, y1 + t * dy
            d = math.hypot(fx, fy)
            if best is None or (d, seg_id) < (best[0], best[1]):
                best = (d, seg_id, i, t)

    dist, seg_id, leg, t = best  # type: ignore[misc]
    seg = city.roads[seg_id]
    leg_lengths = [
        haversine(a.lon, a.lat, b.lon, b.lat)
        for a, b in zip(seg.polyline, seg.polyline[1:])
    ]
    total = sum(leg_lengths)
    along = sum(leg_lengths[:leg]) + t * leg_lengths[leg]

    if along <= total / 2.0:
        anchor = seg.from_junction
        offset = along
        away_from_anchor = True
    else:
        anchor = seg.to_junction
        offset = max(total - along, 0.0)
        away_from_anchor = False
    offset = min(offset, seg.length_m)

    side = "on"
    if dist >= _ON_ROAD_EPS_M:
        aloc = city.junctions[anchor].location
        a = seg.polyline[leg]
        b = seg.polyline[leg + 1]
        ax, ay = local_xy(aloc.lon, aloc.lat, a.lon, a.lat)
        bx, by = local_xy(aloc.lon, aloc.lat, b.lon, b.lat)
        dx, dy = bx - ax, by - ay
        if not away_from_anchor:
            dx, dy = -dx, -dy
        fx, fy = ax + t * (bx - ax), ay + t * (by - ay)
        px, py = local_xy(aloc.lon, aloc.lat, point.lon, point.lat)
        cross = dx * (py - fy) - dy * (px - fx)
        side = "left" if cross > 0 else "right"

    return AddressDescriptor(
        road_name=seg.name,
        road_id=seg.id,
        anchor_junction=anchor,
        offset=offset,
        side=side,
    )


def render_address(addr: AddressDescriptor) -> str:
    where = (
        f"on {addr.road_name}"
        if addr.side == "on"
        else f"on the {addr.side} side of {addr.road_name}"
    )
    return f"{where}, about {round(addr.offset)} meters from junction {addr.anchor_junction}"


def nearby_entities(
    center: GeoPoint,
    radius_m: float,
    kinds: Iterable[str],
    city: CityMap,
) -> list[tuple[str, str, float]]:
    """Entities within radius_m of center, ascending by distance, ties by id."""
    if radius_m <= 0:
        raise ValueError("radius must be positive")
    kinds = tuple(kinds)
    for k in kinds:
        if k not in ENTITY_KINDS:
            raise ValueError(f"unknown entity kind {k!r}")
    return city.index.within(center, radius_m, kinds)


def nearest_pois(center: GeoPoint, k: int, city: CityMap) -> list[str]:
    """Ids of the k nearest PoIs by haversine distance, ties broken by id."""
    if k > len(city.pois):
        raise MapDataError(f"requested {k} PoIs but map has {len(city.pois)}")
    return [pid for pid, _, _ in city.index.nearest(center, k, ("poi",))]


def nearest_entities(
    center: GeoPoint, k: int, kinds: Iterable[str], city: CityMap
) -> list[tuple[str, str, float]]:
    return city.index.nearest(center, k, tuple(kinds))


def named_road_endpoints(city: CityMap, road_name: str) -> Optional[tuple[str, str]]:
    """Terminal junctions of a named road whose segments form a simple path.

    Returns the two degree-1 junctions in lexicographic order, or None when
    the named segments do not form a path (loop, branch, or disconnected).
    """
    segs = city.segments_of_road(road_name)
    if not segs:
        return None
    degree: dict[str, int] = {}
    for s in segs:
        degree[s.from_junction] = degree.get(s.from_junction, 0) + 1
        degree[s.to_junction] = degree.get(s.to_junction, 0) + 1
    ends = sorted(j for j, d in degree.items() if d == 1)
    if len(ends) != 2 or any(d > 2 for d in degree.values()):
        return None
    return (ends[0], ends[1])


# ---------------------------------------------------------------------------
# Import / export
# ---------------------------------------------------------------------------

def _require(record: dict, field_name: str, line_no: int, typ=None):
    if field_name not in record:
        raise MapFormatError(f"line {line_no}: missing field {field_name!r}")
    val = record[field_name]
    if typ is not None and not isinstance(val, typ):
        raise MapFormatError(
            f"line {line_no}: field {field_name!r} has wrong type "
            f"({type(val).__name__})"
        )
    return val


def _parse_lonlat(record: dict, line_no: int) -> GeoPoint:
    lon = _require(record, "lon", line_no, (int, float))
    lat = _require(record, "lat", line_no, (int, float))
    try:
        return GeoPoint(float(lon), float(lat))
    except ValueError as e:
        raise MapFormatError(f"line {line_no}: {e}") from None


def _parse_coord_list(raw, field_name: str, line_no: int) -> tuple[GeoPoint, ...]:
    if not isinstance(raw, list) or not all(
        isinstance(p, list) and len(p) == 2 for p in raw
    ):
        raise MapFormatError(
            f"line {line_no}: field {field_name!r} must be a list of [lon, lat] pairs"
        )
    try:
        return tuple(GeoPoint(float(lon), float(lat)) for lon, lat in raw)
    except ValueError as e:
        raise MapFormatError(f"line {line_no}: {field_name}: {e}") from None


def import_map(
    path: str | Path, categories: tuple[str, ...] = DEFAULT_CATEGORIES
) -> CityMap:
    """Parse and validate canonical map JSONL into a CityMap.

    Raises MapFormatError with the offending line number for malformed lines,
    duplicate ids, or dangling references; MapDataError for integrity
    violations that span entities.
    """
    path = Path(path)
    raw_junctions: dict[str, tuple[GeoPoint, int]] = {}
    raw_roads: dict[str, tuple[dict, int]] = {}
    raw_pois: dict[str, tuple[dict, GeoPoint, int]] = {}
    raw_aois: dict[str, tuple[dict, tuple[GeoPoint, ...], int]] = {}
    seen_ids: dict[str, int] = {}

    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise MapFormatError(f"line {line_no}: invalid JSON ({e.msg})") from None
            if not isinstance(record, dict):
                raise MapFormatError(f"line {line_no}: expected a JSON object")
            etype = _require(record, "type", line_no, str)
            eid = _require(record, "id", line_no, str)
            if eid in seen_ids:
                raise MapFormatError(
                    f"line {line_no}: duplicate id {eid!r} "
                    f"(first seen on line {seen_ids[eid]})"
                )
            seen_ids[eid] = line_no

            if etype == "junction":
                raw_junctions[eid] = (_parse_lonlat(record, line_no), line_no)
            elif etype == "road":
                _require(record, "name", line_no, str)
                _require(record, "from", line_no, str)
                _require(record, "to", line_no, str)
                _require(record, "length_m", line_no, (int, float))
                poly = _parse_coord_list(record["polyline"], "polyline", line_no) \
                    if "polyline" in record else None
                if poly is None:
                    raise MapFormatError(f"line {line_no}: missing field 'polyline'")
                if len(poly) < 2:
                    raise MapFormatError(
                        f"line {line_no}: polyline needs at least 2 points"
                    )
                raw_roads[eid] = ({**record, "polyline": poly}, line_no)
            elif etype == "poi":
                _require(record, "name", line_no, str)
                cat = _require(record, "category", line_no, str)
                if cat not in categories:
                    raise MapFormatError(
                        f"line {line_no}: field 'category': {cat!r} is not in the "
                        f"configured taxonomy"
                    )
                raw_pois[eid] = (record, _parse_lonlat(record, line_no), line_no)
            elif etype == "aoi":
                _require(record, "name", line_no, str)
                boundary = _parse_coord_list(
                    _require(record, "boundary", line_no), "boundary", line_no
                )
                pois_field = _require(record, "pois", line_no, list)
                if not all(isinstance(p, str) for p in pois_field):
                    raise MapFormatError(
                        f"line {line_no}: field 'pois' must contain string ids"
                    )
                raw_aois[eid] = (record, boundary, line_no)
            else:
                raise MapFormatError(
                    f"line {line_no}: field 'type': unknown entity type {etype!r}"
                )

    # Referential integrity and per-entity invariants.
    incident: dict[str, list[str]] = {jid: [] for jid in raw_junctions}
    roads: dict[str, RoadSegment] = {}
    for rid in sorted(raw_roads):
        record, line_no = raw_roads[rid]
        for key in ("from", "to"):
            jid = record[key]
            if jid not in raw_junctions:
                raise MapFormatError(
                    f"line {line_no}: road {rid!r} references unknown junction "
                    f"{jid!r} in field {key!r}"
                )
        poly = record["polyline"]
        stated = float(record["length_m"])
        if stated <= 0:
            raise MapFormatError(f"line {line_no}: length_m must be positive")
        arc = polyline_length_m(poly)
        if abs(stated - arc) > 0.01 * arc + 0.5:
            raise MapFormatError(
                f"line {line_no}: length_m {stated:.1f} deviates more than 1% from "
                f"the polyline arc length {arc:.1f}"
            )
        roads[rid] = RoadSegment(
            id=rid,
            name=record["name"],
            from_junction=record["from"],
            to_junction=record["to"],
            polyline=poly,
            length_m=stated,
        )
        incident[record["from"]].append(rid)
        incident[record["to"]].append(rid)

    junctions: dict[str, Junction] = {}
    for jid in sorted(raw_junctions):
        loc, line_no = raw_junctions[jid]
        if not incident[jid]:
            raise MapFormatError(
                f"line {line_no}: junction {jid!r} has no incident roads"
            )
        junctions[jid] = Junction(
            id=jid, location=loc, incident_roads=tuple(sorted(incident[jid]))
        )

    aoi_boundaries: dict[str, tuple[GeoPoint, ...]] = {}
    for aid in sorted(raw_aois):
        record, boundary, line_no = raw_aois[aid]
        if len(boundary) > 1 and boundary[0] == boundary[-1]:
            boundary = boundary[:-1]
        if len(boundary) < 3:
            raise MapFormatError(
                f"line {line_no}: AoI boundary needs at least 3 distinct vertices"
            )
        if polygon_self_intersects(boundary):
            raise MapFormatError(f"line {line_no}: AoI boundary self-intersects")
        for pid in record["pois"]:
            if pid not in raw_pois:
                raise MapFormatError(
                    f"line {line_no}: AoI {aid!r} references unknown PoI {pid!r}"
                )
            if not point_in_polygon(raw_pois[pid][1], boundary):
                raise MapFormatError(
                    f"line {line_no}: PoI {pid!r} lies outside the boundary of "
                    f"AoI {aid!r}"
                )
        aoi_boundaries[aid] = boundary

    # Addresses are derived eagerly so the final CityMap is fully immutable.
    interim = CityMap(
        pois={
            pid: PoI(
                id=pid,
                name=rec["name"],
                category=rec["category"],
                location=loc,
            )
            for pid, (rec, loc, _) in raw_pois.items()
        },
        aois={
            aid: AoI(
                id=aid,
                name=rec["name"],
                boundary=aoi_boundaries[aid],
                contained_pois=tuple(sorted(rec["pois"])),
                centroid=polygon_centroid(aoi_boundaries[aid]),
            )
            for aid, (rec, _, _) in raw_aois.items()
        },
        junctions=junctions,
        roads=roads,
        categories=categories,
    )
    if not roads:
        return interim

    pois = {
        pid: PoI(
            id=p.id,
            name=p.name,
            category=p.category,
            location=p.location,
            address=reconstruct_address(p.location, interim),
        )
        for pid, p in interim.pois.items()
    }
    aois = {
        aid: AoI(
            id=a.id,
            name=a.name,
            boundary=a.boundary,
            contained_pois=a.contained_pois,
            centroid=a.centroid,
            address=reconstruct_address(a.centroid, interim),
        )
        for aid, a in interim.aois.items()
    }
    return CityMap(pois=pois, aois=aois, junctions=junctions, roads=roads,
                  categories=categories)


def export_map(city: CityMap, path: str | Path) -> None:
    """Write the canonical JSONL representation (derived fields are omitted)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for jid in sorted(city.junctions):
            j = city.junctions[jid]
            fh.write(
                json.dumps(
                    {"type": "junction", "id": j.id, "lon": j.location.lon,
                     "lat": j.location.lat},
                    ensure_ascii=False,
                )
                + "\n"
            )
        for rid in sorted(city.roads):
            r = city.roads[rid]
            fh.write(
                json.dumps(
                    {
                        "type": "road",
                        "id": r.id,
                        "name": r.name,
                        "from": r.from_junction,
                        "to": r.to_junction,
                        "polyline": [[p.lon, p.lat] for p in r.polyline],
                        "length_m": r.length_m,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
        for pid in sorted(city.pois):
            p = city.pois[pid]
            fh.write(
                json.dumps(
                    {
                        "type": "poi",
                        "id": p.id,
                        "name": p.name,
                        "category": p.category,
                        "lon": p.location.lon,
                        "lat": p.location.lat,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
        for aid in sorted(city.aois):
            a = city.aois[aid]
            fh.write(
                json.dumps(
                    {
                        "type": "aoi",
                        "id": a.id,
                        "name": a.name,
                        "boundary": [[p.lon, p.lat] for p in a.boundary],
                        "pois": list(a.contained_pois),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
