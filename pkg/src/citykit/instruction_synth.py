"""Instruction-tuning data synthesis from a city map.

Three generators, all deterministic given (map, config, seed):

* gen_cityqa       -- single-round QA about individual entities
* gen_citywalk     -- route narrations with junction-by-junction observations
* gen_cityreasoning -- walks plus explicit distance/direction reasoning chains

Every emitted answer is recomputable from the map; the verify_* functions
are independent text-level checkers used by the test suite.

Dataset JSONL: {"id","source","messages":[{"role","content"},...],"meta":{...}}
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .geo import (
    COMPASS,
    COMPASS_UNIT,
    COMPASS_WORDS,
    WORD_TO_COMPASS,
    bearing_from_east_north,
    quantize_direction,
)
from .map_core import AoI, CityMap, named_road_endpoints, nearest_entities, render_address
from .routing import RoadGraph, Route, shortest_path, shortest_path_length
from .templates import ANSWER_TEMPLATES, DEFAULT_TEMPLATE_SET, TemplateSet

QA_TYPES = (
    "category",
    "address",
    "coordinates",
    "nearby",
    "road_endpoints",
    "road_connections",
    "junction_roads",
    "junction_nearby",
)

DEFAULT_LENGTH_WINDOW = (500.0, 5000.0)
MAX_OBSERVED_PLACES = 3


class SynthError(Exception):
    pass


@dataclass(frozen=True)
class InstructionSample:
    id: str
    source: str  # cityqa | citywalk | cityreasoning
    messages: tuple[dict, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.messages) < 2 or len(self.messages) % 2 != 0:
            raise ValueError("messages must be non-empty user/assistant pairs")
        for i, msg in enumerate(self.messages):
            want = "user" if i % 2 == 0 else "assistant"
            if msg.get("role") != want:
                raise ValueError(f"message {i} must have role {want!r}")

    @property
    def rounds(self) -> int:
        return len(self.messages) // 2

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "messages": list(self.messages),
            "meta": self.meta,
        }

    @classmethod
    def from_record(cls, record: dict) -> "InstructionSample":
        return cls(
            id=record["id"],
            source=record["source"],
            messages=tuple(record["messages"]),
            meta=record.get("meta", {}),
        )


def _allocate(count: int, keys: Sequence[str], weights: Optional[dict] = None) -> dict[str, int]:
    """Largest-remainder allocation of count over keys."""
    if weights is None:
        weights = {k: 1.0 for k in keys}
    total_w = sum(weights.get(k, 0.0) for k in keys)
    if total_w <= 0:
        raise ValueError("type mix weights must sum to a positive value")
    exact = {k: count * weights.get(k, 0.0) / total_w for k in keys}
    alloc = {k: int(exact[k]) for k in keys}
    remainder = count - sum(alloc.values())
    by_frac = sorted(keys, key=lambda k: (-(exact[k] - alloc[k]), k))
    for k in by_frac[:remainder]:
        alloc[k] += 1
    return alloc


def dominant_category(city: CityMap, aoi: AoI) -> Optional[str]:
    """Most common contained-PoI category; ties broken by category name."""
    counts: dict[str, int] = {}
    for pid in aoi.contained_pois:
        cat = city.pois[pid].category
        counts[cat] = counts.get(cat, 0) + 1
    if not counts:
        return None
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


# ---------------------------------------------------------------------------
# CityQA
# ---------------------------------------------------------------------------

def _qa_candidates(city: CityMap) -> dict[str, list]:
    """Per question type, the deterministic list of things we can ask about."""
    poi_ids = sorted(city.pois)
    aoi_ids = sorted(city.aois)
    aoi_with_pois = [a for a in aoi_ids if city.aois[a].contained_pois]
    junction_ids = sorted(city.junctions)
    road_names = city.road_names()
    path_roads = [n for n in road_names if named_road_endpoints(city, n)]

    connected_roads = []
    for name in road_names:
        touching = _connected_road_names(city, name)
        if touching:
            connected_roads.append(name)

    entities = [("poi", p) for p in poi_ids] + [("aoi", a) for a in aoi_ids]
    return {
        "category": [("poi", p) for p in poi_ids] + [("aoi", a) for a in aoi_with_pois],
        "address": entities if city.roads else [],
        "coordinates": entities,
        "nearby": entities if len(entities) > 1 else [],
        "road_endpoints": path_roads,
        "road_connections": connected_roads,
        "junction_roads": junction_ids,
        "junction_nearby": junction_ids if poi_ids else [],
    }


def _connected_road_names(city: CityMap, name: str) -> list[str]:
    junctions: set[str] = set()
    for seg in city.segments_of_road(name):
        junctions.add(seg.from_junction)
        junctions.add(seg.to_junction)
    names: set[str] = set()
    for jid in junctions:
        for rid in city.junctions[jid].incident_roads:
            other = city.roads[rid].name
            if other != name:
                names.add(other)
    return sorted(names)


def _nearby_names(city: CityMap, entity_id: str, k: int = MAX_OBSERVED_PLACES) -> list[str]:
    center = city.entity_point(entity_id)
    hits = nearest_entities(center, k + 1, ("poi", "aoi"), city)
    names = [city.entity_name(eid) for eid, _, _ in hits if eid != entity_id]
    return names[:k]


def _pick(rng: random.Random, options: Sequence):
    return options[rng.randrange(len(options))]


def gen_cityqa(
    city: CityMap,
    count: int,
    seed: int,
    templates: TemplateSet = DEFAULT_TEMPLATE_SET,
    type_mix: Optional[dict[str, float]] = None,
) -> list[InstructionSample]:
    """Single-round QA samples covering PoIs, AoIs, roads, and junctions."""
    if not (city.pois or city.aois or city.junctions):
        raise SynthError("map has no entities")
    templates.validate(QA_TYPES)
    candidates = _qa_candidates(city)
    alloc = _allocate(count, QA_TYPES, type_mix)
    for qtype, n in alloc.items():
        if n > 0 and not candidates[qtype]:
            raise SynthError(f"map lacks entities for question type {qtype!r}")

    samples: list[InstructionSample] = []
    index = 0
    for qtype in QA_TYPES:
        for _ in range(alloc[qtype]):
            rng = random.Random(f"{seed}:cityqa:{index}")
            samples.append(_make_qa_sample(city, qtype, index, rng, templates, candidates))
            index += 1
    return samples


def _make_qa_sample(city, qtype, index, rng, templates, candidates) -> InstructionSample:
    t_idx, template = templates.pick(rng, qtype)
    answers = ANSWER_TEMPLATES[qtype]
    a_idx = rng.randrange(len(answers))
    answer_template = answers[a_idx]
    meta: dict = {"question_type": qtype, "seed": index, "template": t_idx}

    if qtype in ("category", "address", "coordinates", "nearby"):
        kind, eid = _pick(rng, candidates[qtype])
        entity = city.pois[eid] if kind == "poi" else city.aois[eid]
        meta.update(kind=kind, entity=eid)
        question = template.format(name=entity.name)
        if qtype == "category":
            cat = entity.category if kind == "poi" else dominant_category(city, entity)
            answer = answer_template.format(name=entity.name, category=cat)
        elif qtype == "address":
            answer = answer_template.format(
                name=entity.name, address=render_address(entity.address)
            )
        elif qtype == "coordinates":
            point = entity.location if kind == "poi" else entity.centroid
            answer = answer_template.format(
                name=entity.name, lon=f"{point.lon:.6f}", lat=f"{point.lat:.6f}"
            )
        else:  # nearby
            names = _nearby_names(city, eid)
            if not names:
                raise SynthError(f"no neighbors found for entity {eid}")
            answer = answer_template.format(name=entity.name, items="; ".join(names))
    elif qtype == "road_endpoints":
        name = _pick(rng, candidates[qtype])
        a, b = named_road_endpoints(city, name)
        meta.update(road_name=name)
        question = template.format(road=name)
        answer = answer_template.format(road=name, a=a, b=b)
    elif qtype == "road_connections":
        name = _pick(rng, candidates[qtype])
        items = _connected_road_names(city, name)[:4]
        meta.update(road_name=name)
        question = template.format(road=name)
        answer = answer_template.format(road=name, items="; ".join(items))
    elif qtype == "junction_roads":
        jid = _pick(rng, candidates[qtype])
        names = sorted({city.roads[r].name for r in city.junctions[jid].incident_roads})
        meta.update(junction=jid)
        question = template.format(junction=jid)
        answer = answer_template.format(junction=jid, items="; ".join(names))
    else:  # junction_nearby
        jid = _pick(rng, candidates[qtype])
        hits = nearest_entities(
            city.junctions[jid].location, min(MAX_OBSERVED_PLACES, len(city.pois)),
            ("poi",), city,
        )
        names = [city.pois[eid].name for eid, _, _ in hits]
        meta.update(junction=jid)
        question = template.format(junction=jid)
        answer = answer_template.format(junction=jid, items="; ".join(names))

    return InstructionSample(
        id=f"cityqa-{index:06d}",
        source="cityqa",
        messages=(
            {"role": "user", "content": question},
            {"role": "assistant", "content": answer},
        ),
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Shared walk rendering
# ---------------------------------------------------------------------------

def walk_legs(route: Route) -> list[tuple[str, int, str]]:
    """(compass, rounded meters, road name) per step; what narrations print."""
    return [
        (step.direction, int(round(step.length_m)), step.road_name)
        for step in route.steps
    ]


def render_walk_block(route: Route) -> str:
    return "\n".join(
        f"- head {COMPASS_WORDS[d]} along {road} for {length} meters"
        for d, length, road in walk_legs(route)
    )


def _sample_od(
    graph: RoadGraph,
    rng: random.Random,
    window: tuple[float, float],
    max_attempts: int = 200,
) -> tuple[str, str, float]:
    nodes = graph.nodes
    if len(nodes) < 2:
        raise SynthError("graph needs at least 2 junctions")
    for _ in range(max_attempts):
        o = nodes[rng.randrange(len(nodes))]
        d = nodes[rng.randrange(len(nodes))]
        if o == d:
            continue
        length = shortest_path_length(graph, o, d)
        if window[0] <= length <= window[1]:
            return o, d, length
    raise SynthError(
        f"no reachable OD pair with route length in {window} after "
        f"{max_attempts} attempts"
    )


# ---------------------------------------------------------------------------
# CityWalk
# ---------------------------------------------------------------------------

def gen_citywalk(
    city: CityMap,
    graph: RoadGraph,
    count: int,
    seed: int,
    templates: TemplateSet = DEFAULT_TEMPLATE_SET,
    length_window: tuple[float, float] = DEFAULT_LENGTH_WINDOW,
    max_attempts: int = 200,
) -> list[InstructionSample]:
    """Fixed-path narrations: per step a direction/road/length line, with up
    to MAX_OBSERVED_PLACES nearby places reported at intermediate junctions."""
    templates.validate(("route",))
    samples = []
    for i in range(count):
        rng = random.Random(f"{seed}:citywalk:{i}")
        o, d, _ = _sample_od(graph, rng, length_window, max_attempts)
        route = shortest_path(graph, o, d)
        t_idx, template = templates.pick(rng, "route")
        question = template.format(origin=o, dest=d)

        lines = []
        legs = walk_legs(route)
        for k, (step, (direction, length, road)) in enumerate(zip(route.steps, legs)):
            lines.append(
                f"Walk {COMPASS_WORDS[direction]} along {road} for {length} meters."
            )
            if k < len(route.steps) - 1:
                names = _nearby_names(city, step.to_junction)
                if names:
                    lines.append(
                        f"You pass junction {step.to_junction}; nearby: "
                        + "; ".join(names) + "."
                    )
        total = int(round(route.total_length))
        lines.append(
            f"You arrive at junction {d}. The walk is about {total} meters in total."
        )
        samples.append(
            InstructionSample(
                id=f"citywalk-{i:06d}",
                source="citywalk",
                messages=(
                    {"role": "user", "content": question},
                    {"role": "assistant", "content": "\n".join(lines)},
                ),
                meta={"question_type": "route", "od": [o, d], "seed": i,
                      "template": t_idx},
            )
        )
    return samples


# ---------------------------------------------------------------------------
# CityReasoning
# ---------------------------------------------------------------------------

def _distance_chain(legs: list[tuple[str, int, str]]) -> tuple[list[str], int]:
    lines = ["Let's add up the legs step by step.", "Start at 0 meters."]
    running = 0
    for direction, length, _road in legs:
        running += length
        lines.append(
            f"Add {length} meters heading {COMPASS_WORDS[direction]}: "
            f"{running} meters so far."
        )
    total10 = int(round(running / 10.0)) * 10
    lines.append(
        f"Rounding to the nearest ten meters, the total is about {total10} meters."
    )
    return lines, total10


def _direction_chain(legs: list[tuple[str, int, str]]) -> Optional[tuple[list[str], str]]:
    bins: dict[str, int] = {}
    for direction, length, _road in legs:
        bins[direction] = bins.get(direction, 0) + length
    lines = ["Let's group the legs by direction."]
    for c in COMPASS:
        if bins.get(c):
            lines.append(f"Heading {COMPASS_WORDS[c]}: {bins[c]} meters in total.")
    east = sum(n * COMPASS_UNIT[c][0] for c, n in bins.items())
    north = sum(n * COMPASS_UNIT[c][1] for c, n in bins.items())
    if east == 0.0 and north == 0.0:
        return None  # degenerate cancellation; caller resamples
    ew = "east" if east >= 0 else "west"
    ns = "north" if north >= 0 else "south"
    lines.append(
        f"Net displacement: about {round(abs(east))} meters {ew} and "
        f"{round(abs(north))} meters {ns}."
    )
    deg = bearing_from_east_north(east, north)
    word = COMPASS_WORDS[quantize_direction(deg)]
    lines.append(
        f"That is a bearing of about {round(deg)} degrees, so the end point "
        f"lies roughly {word} of the start."
    )
    return lines, word


def gen_cityreasoning(
    graph: RoadGraph,
    count: int,
    seed: int,
    templates: TemplateSet = DEFAULT_TEMPLATE_SET,
    two_round_fraction: float = 0.13,
    length_window: tuple[float, float] = DEFAULT_LENGTH_WINDOW,
    max_attempts: int = 200,
) -> list[InstructionSample]:
    """Walks with explicit reasoning chains.

    Even indices ask the distance question first, odd indices the direction
    question; a deterministic two_round_fraction of samples append a second
    round asking the complementary question about the same walk.
    """
    templates.validate(
        ("reasoning_distance", "reasoning_direction",
         "reasoning_distance_followup", "reasoning_direction_followup")
    )
    n_two = int(round(count * two_round_fraction))
    picker = random.Random(f"{seed}:cityreasoning:rounds")
    two_round = set(picker.sample(range(count), n_two)) if count else set()

    samples = []
    for i in range(count):
        rng = random.Random(f"{seed}:cityreasoning:{i}")
        for _ in range(max_attempts):
            o, d, _ = _sample_od(graph, rng, length_window, max_attempts)
            route = shortest_path(graph, o, d)
            legs = walk_legs(route)
            direction_part = _direction_chain(legs)
            if legs and direction_part is not None:
                break
        else:
            raise SynthError("could not sample a non-degenerate walk")

        walk_block = render_walk_block(route)
        first = "distance" if i % 2 == 0 else "direction"
        kinds = [first]
        t_idx, template = templates.pick(rng, f"reasoning_{first}")
        messages: list[dict] = [
            {"role": "user", "content": template.format(walk=walk_block)}
        ]
        dist_lines, _total10 = _distance_chain(legs)
        dir_lines, _word = direction_part
        messages.append(
            {
                "role": "assistant",
                "content": "\n".join(dist_lines if first == "distance" else dir_lines),
            }
        )
        if i in two_round:
            second = "direction" if first == "distance" else "distance"
            kinds.append(second)
            _f_idx, follow = templates.pick(rng, f"reasoning_{second}_followup")
            messages.append({"role": "user", "content": follow})
            messages.append(
                {
                    "role": "assistant",
                    "content": "\n".join(
                        dist_lines if second == "distance" else dir_lines
                    ),
                }
            )
        samples.append(
            InstructionSample(
                id=f"cityreasoning-{i:06d}",
                source="cityreasoning",
                messages=tuple(messages),
                meta={"question_type": "reasoning", "kinds": kinds, "od": [o, d],
                      "seed": i, "template": t_idx},
            )
        )
    return samples


# ---------------------------------------------------------------------------
# Export / load
# ---------------------------------------------------------------------------

def export_dataset(samples: Sequence[InstructionSample], path: str | Path) -> None:
    """Write samples as JSONL, stably ordered by sample id."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample in sorted(samples, key=lambda s: s.id):
            fh.write(json.dumps(sample.to_record(), ensure_ascii=False) + "\n")


def load_dataset(path: str | Path) -> list[InstructionSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(InstructionSample.from_record(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# Independent checkers (used by tests; text-level, not renderer reuse)
# ---------------------------------------------------------------------------

_WALK_LEG_RE = re.compile(r"head (\w+) along (.+?) for (\d+) meters")
_NARRATE_LEG_RE = re.compile(r"Walk (\w+) along (.+?) for (\d+) meters\.")
_TOTAL_RE = re.compile(r"the total is about (\d+) meters")
_DIRECTION_RE = re.compile(r"lies roughly (\w+) of the start")
_LIST_RE = re.compile(r": (.+)\.$")


def parse_walk_legs(text: str) -> list[tuple[str, int]]:
    """(compass, meters) legs extracted from narrated walk lines."""
    return [
        (WORD_TO_COMPASS[w], int(n)) for w, _road, n in _WALK_LEG_RE.findall(text)
    ]


def verify_reasoning_sample(sample: InstructionSample) -> bool:
    """Re-derive every final answer from the narrated legs alone."""
    legs = parse_walk_legs(sample.messages[0]["content"])
    if not legs:
        return False
    kinds = sample.meta.get("kinds", [])
    if len(kinds) != sample.rounds:
        return False
    for r, kind in enumerate(kinds):
        text = sample.messages[2 * r + 1]["content"]
        if kind == "distance":
            m = _TOTAL_RE.search(text)
            expect = int(round(sum(n for _, n in legs) / 10.0)) * 10
            if not m or int(m.group(1)) != expect:
                return False
        else:
            m = _DIRECTION_RE.search(text)
            east = sum(n * COMPASS_UNIT[c][0] for c, n in legs)
            north = sum(n * COMPASS_UNIT[c][1] for c, n in legs)
            if east == 0.0 and north == 0.0:
                return False
            word = COMPASS_WORDS[quantize_direction(bearing_from_east_north(east, north))]
            if not m or m.group(1) != word:
                return False
    return True


def verify_citywalk_sample(
    sample: InstructionSample, city: CityMap, graph: RoadGraph
) -> bool:
    """Recompute the route from the OD pair in meta and match the narration."""
    o, d = sample.meta["od"]
    route = shortest_path(graph, o, d)
    text = sample.messages[1]["content"]
    narrated = _NARRATE_LEG_RE.findall(text)
    if len(narrated) != len(route.steps):
        return False
    for step, (word, road, n) in zip(route.steps, narrated):
        if WORD_TO_COMPASS.get(word) != step.direction:
            return False
        if road != step.road_name or int(n) != int(round(step.length_m)):
            return False
    m = re.search(r"about (\d+) meters in total", text)
    return bool(m) and int(m.group(1)) == int(round(route.total_length))


def verify_cityqa_sample(sample: InstructionSample, city: CityMap) -> bool:
    qtype = sample.meta["question_type"]
    text = sample.messages[1]["content"]

    def tail_list() -> Optional[list[str]]:
        m = _LIST_RE.search(text)
        return [s.strip() for s in m.group(1).split(";")] if m else None

    if qtype == "category":
        eid = sample.meta["entity"]
        if sample.meta["kind"] == "poi":
            expect = city.pois[eid].category
        else:
            expect = dominant_category(city, city.aois[eid])
        found = [
            c for c in city.categories if re.search(rf"\b{re.escape(c)}\b", text)
        ]
        return found == [expect]
    if qtype == "address":
        eid = sample.meta["entity"]
        point = (
            city.pois[eid].location
            if sample.meta["kind"] == "poi"
            else city.aois[eid].centroid
        )
        from .map_core import reconstruct_address

        addr = reconstruct_address(point, city)
        m = re.search(
            r"\bon (?:the (left|right) side of )?(.+?), about (\d+) meters "
            r"from junction (\S+?)\.?$",
            text,
        )
        if not m:
            return False
        side = m.group(1) or "on"
        return (
            side == addr.side
            and m.group(2) == addr.road_name
            and int(m.group(3)) == round(addr.offset)
            and m.group(4) == addr.anchor_junction
        )
    if qtype == "coordinates":
        eid = sample.meta["entity"]
        point = (
            city.pois[eid].location
            if sample.meta["kind"] == "poi"
            else city.aois[eid].centroid
        )
        m = re.search(r"longitude (-?\d+\.\d+), latitude (-?\d+\.\d+)", text)
        if not m:
            return False
        return (
            abs(float(m.group(1)) - point.lon) <= 1.1e-6
            and abs(float(m.group(2)) - point.lat) <= 1.1e-6
        )
    if qtype == "nearby":
        return tail_list() == _nearby_names(city, sample.meta["entity"])
    if qtype == "road_endpoints":
        ends = named_road_endpoints(city, sample.meta["road_name"])
        m = re.search(r"junction (\S+?) and junction (\S+?)\.?$", text)
        return bool(m) and (m.group(1), m.group(2)) == ends
    if qtype == "road_connections":
        return tail_list() == _connected_road_names(city, sample.meta["road_name"])[:4]
    if qtype == "junction_roads":
        jid = sample.meta["junction"]
        expect = sorted(
            {city.roads[r].name for r in city.junctions[jid].incident_roads}
        )
        return tail_list() == expect
    if qtype == "junction_nearby":
        jid = sample.meta["junction"]
        hits = nearest_entities(
            city.junctions[jid].location, min(MAX_OBSERVED_PLACES, len(city.pois)),
            ("poi",), city,
        )
        return tail_list() == [city.pois[eid].name for eid, _, _ in hits]
    return False


def verify_sample(
    sample: InstructionSample, city: CityMap, graph: Optional[RoadGraph] = None
) -> bool:
    if sample.source == "cityqa":
        return verify_cityqa_sample(sample, city)
    if sample.source == "citywalk":
        if graph is None:
            raise ValueError("citywalk verification needs the road graph")
        return verify_citywalk_sample(sample, city, graph)
    if sample.source == "cityreasoning":
        return verify_reasoning_sample(sample)
    raise ValueError(f"unknown source {sample.source!r}")
