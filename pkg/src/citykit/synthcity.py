"""Deterministic synthetic city generator.

Produces a jittered grid street network with named streets/avenues,
block-shaped AoIs, and themed PoIs, sized to an approximate total entity
count. Output is canonical map JSONL records, so everything flows through
the regular importer.
"""

from __future__ import annotations

import random
import tempfile
from pathlib import Path

from .geo import haversine, offset_lonlat
from .map_core import DEFAULT_CATEGORIES, CityMap, import_map

_WORDS = (
    "Amber", "Birch", "Cedar", "Crimson", "Golden", "Granite", "Harbor",
    "Hazel", "Iron", "Ivory", "Jade", "Juniper", "Lilac", "Maple", "Marble",
    "Meadow", "Misty", "Noble", "Oak", "Ocean", "Olive", "Opal", "Orchid",
    "Pearl", "Pine", "Quartz", "Raven", "Rowan", "Ruby", "Saffron", "Sage",
    "Silver", "Summit", "Sunny", "Thistle", "Topaz", "Velvet", "Willow",
    "Winter", "Wren",
)

_CATEGORY_NOUNS = {
    "residential": ("Apartments", "Residences", "Terrace Homes", "Court Housing"),
    "food": ("Bistro", "Diner", "Bakery", "Noodle House", "Cafe", "Grill"),
    "shopping": ("Market", "Boutique", "Emporium", "Outlet", "Bookshop"),
    "business": ("Consulting", "Tower Offices", "Co-Working Hub", "Trading House"),
    "education": ("Primary School", "Academy", "Library Annex", "Training Institute"),
    "medical": ("Clinic", "Pharmacy", "Dental Practice", "Health Center"),
    "entertainment": ("Cinema", "Arcade", "Jazz Club", "Theater"),
    "transport": ("Bus Terminal", "Metro Station", "Bike Depot", "Cab Stand"),
    "hotel": ("Hotel", "Inn", "Hostel", "Guesthouse"),
    "sport": ("Gym", "Swimming Hall", "Tennis Courts", "Stadium Annex"),
    "culture": ("Museum", "Gallery", "Concert Hall", "Heritage House"),
    "public-service": ("Post Office", "Police Post", "Civic Office", "Fire Station"),
}

_AOI_SUFFIXES = ("Quarter", "District", "Commons", "Heights", "Yards", "Gardens",
                 "Square", "Park")


def _street_name(i: int, suffix: str) -> str:
    word = _WORDS[i % len(_WORDS)]
    gen = i // len(_WORDS)
    return f"{word} {suffix}" if gen == 0 else f"{word} {suffix} {gen + 1}"


def generate_city_records(
    n_entities: int = 5000,
    seed: int = 0,
    center: tuple[float, float] = (8.30, 47.05),
    spacing_m: float = 260.0,
) -> list[dict]:
    """Canonical map records for a synthetic city of roughly n_entities."""
    rng = random.Random(f"synthcity:{seed}")
    g = max(3, round((n_entities / 10.0) ** 0.5))
    n_junctions = g * g
    n_roads = 2 * g * (g - 1)
    n_aois = min((g - 1) * (g - 1), max(4, n_entities // 40))
    n_pois = n_entities - n_junctions - n_roads - n_aois
    if n_pois < 3 * n_aois:
        n_aois = max(2, (n_entities - n_junctions - n_roads) // 4)
        n_pois = n_entities - n_junctions - n_roads - n_aois
    if n_pois < 4:
        raise ValueError(f"n_entities={n_entities} too small for a {g}x{g} grid")

    lon0, lat0 = center
    jitter = 0.15 * spacing_m

    # Junction grid, row-major; row 0 is the north edge.
    xy: dict[tuple[int, int], tuple[float, float]] = {}
    for i in range(g):
        for j in range(g):
            x = (j - (g - 1) / 2.0) * spacing_m + rng.uniform(-jitter, jitter)
            y = ((g - 1) / 2.0 - i) * spacing_m + rng.uniform(-jitter, jitter)
            xy[(i, j)] = (x, y)

    def jid(i: int, j: int) -> str:
        return f"J{i:02d}{j:02d}"

    def lonlat(i: int, j: int) -> tuple[float, float]:
        x, y = xy[(i, j)]
        return offset_lonlat(lon0, lat0, x, y)

    records: list[dict] = []
    for i in range(g):
        for j in range(g):
            lon, lat = lonlat(i, j)
            records.append({"type": "junction", "id": jid(i, j), "lon": lon, "lat": lat})

    def road_record(rid: str, name: str, a: tuple[int, int], b: tuple[int, int]) -> dict:
        lon1, lat1 = lonlat(*a)
        lon2, lat2 = lonlat(*b)
        return {
            "type": "road",
            "id": rid,
            "name": name,
            "from": jid(*a),
            "to": jid(*b),
            "polyline": [[lon1, lat1], [lon2, lat2]],
            "length_m": haversine(lon1, lat1, lon2, lat2),
        }

    # Each street/avenue is split into two named runs so the map carries
    # roughly 4*g distinct road names.
    def split_at() -> int:
        lo, hi = max(1, g // 3), max(1, min(g - 2, 2 * g // 3))
        return rng.randint(lo, hi) if hi > lo else lo

    h_split = {i: split_at() for i in range(g)}
    v_split = {j: split_at() for j in range(g)}
    for i in range(g):
        for j in range(g - 1):
            name = _street_name(2 * i + (0 if j < h_split[i] else 1), "Street")
            records.append(road_record(f"RH{i:02d}{j:02d}", name, (i, j), (i, j + 1)))
    for j in range(g):
        for i in range(g - 1):
            name = _street_name(2 * j + (0 if i < v_split[j] else 1), "Avenue")
            records.append(road_record(f"RV{i:02d}{j:02d}", name, (i, j), (i + 1, j)))

    # Blocks: inset quads between four neighboring junctions.
    blocks = [(i, j) for i in range(g - 1) for j in range(g - 1)]
    block_theme = {
        b: DEFAULT_CATEGORIES[rng.randrange(len(DEFAULT_CATEGORIES))] for b in blocks
    }

    def block_corners(i: int, j: int) -> list[tuple[float, float]]:
        corners = [xy[(i, j)], xy[(i, j + 1)], xy[(i + 1, j + 1)], xy[(i + 1, j)]]
        cx = sum(c[0] for c in corners) / 4.0
        cy = sum(c[1] for c in corners) / 4.0
        return [
            (c[0] + 0.18 * (cx - c[0]), c[1] + 0.18 * (cy - c[1])) for c in corners
        ]

    used_names: set[str] = set()

    def unique_name(base: str) -> str:
        name = base
        k = 2
        while name in used_names:
            name = f"{base} No. {k}"
            k += 1
        used_names.add(name)
        return name

    block_pois: dict[tuple[int, int], list[str]] = {b: [] for b in blocks}
    poi_counter = 0
    for p in range(n_pois):
        b = blocks[p % len(blocks)]
        theme = block_theme[b]
        if rng.random() < 0.55:
            category = theme
        else:
            others = [c for c in DEFAULT_CATEGORIES if c != theme]
            category = others[rng.randrange(len(others))]
        c0, c1, c2, c3 = block_corners(*b)
        u = rng.uniform(0.08, 0.92)
        v = rng.uniform(0.08, 0.92)
        # bilinear interpolation inside the inset quad
        top = (c0[0] + u * (c1[0] - c0[0]), c0[1] + u * (c1[1] - c0[1]))
        bot = (c3[0] + u * (c2[0] - c3[0]), c3[1] + u * (c2[1] - c3[1]))
        x = top[0] + v * (bot[0] - top[0])
        y = top[1] + v * (bot[1] - top[1])
        lon, lat = offset_lonlat(lon0, lat0, x, y)
        nouns = _CATEGORY_NOUNS[category]
        name = unique_name(
            f"{_WORDS[rng.randrange(len(_WORDS))]} {nouns[rng.randrange(len(nouns))]}"
        )
        pid = f"P{poi_counter:05d}"
        poi_counter += 1
        records.append(
            {"type": "poi", "id": pid, "name": name, "category": category,
             "lon": lon, "lat": lat}
        )
        block_pois[b].append(pid)

    aoi_blocks = sorted(rng.sample(blocks, n_aois))
    for i, j in aoi_blocks:
        corners = block_corners(i, j)
        boundary = [list(offset_lonlat(lon0, lat0, x, y)) for x, y in corners]
        name = unique_name(
            f"{_WORDS[rng.randrange(len(_WORDS))]} "
            f"{_AOI_SUFFIXES[rng.randrange(len(_AOI_SUFFIXES))]}"
        )
        records.append(
            {
                "type": "aoi",
                "id": f"A{i:02d}{j:02d}",
                "name": name,
                "boundary": boundary,
                "pois": sorted(block_pois[(i, j)]),
            }
        )
    return records


def write_city_jsonl(records: list[dict], path: str | Path) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def generate_city(
    n_entities: int = 5000,
    seed: int = 0,
    center: tuple[float, float] = (8.30, 47.05),
    spacing_m: float = 260.0,
) -> CityMap:
    """Convenience wrapper: generate records and load them through import_map."""
    records = generate_city_records(n_entities, seed, center, spacing_m)
    with tempfile.NamedTemporaryFile(
        "w", suffix=".jsonl", delete=False, encoding="utf-8"
    ) as fh:
        tmp = fh.name
    try:
        write_city_jsonl(records, tmp)
        return import_map(tmp)
    finally:
        Path(tmp).unlink(missing_ok=True)
