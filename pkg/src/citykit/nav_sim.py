"""Step-based street-navigation environment.

An episode starts at the junction nearest the start AoI's centroid. Each
step the agent sees the two nearest PoIs, the destination name, and the
lane choices at the current junction ([road name, direction]); choosing
one moves it to the far junction. The episode succeeds when the position
comes within SUCCESS_RADIUS_M of the destination AoI centroid, and fails
once MAX_STEPS steps are used (failed episodes report exactly MAX_STEPS).

Invalid choices burn a step without moving, so transcripts stay
comparable in length across agents.
"""

from __future__ import annotations

import collections
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .geo import quantize_direction
from .instruction_synth import _allocate
from .map_core import CityMap, GeoPoint, nearest_pois
from .routing import RoadGraph, point_bearing, point_distance, shortest_path_length

SUCCESS_RADIUS_M = 500.0
MAX_STEPS = 30

# min_steps composition for the default 21-task suite (mean ~4.52).
_SUITE_BUCKETS = {1: 2, 2: 1, 3: 2, 4: 3, 5: 5, 6: 8}


class NavError(Exception):
    pass


class NavSuiteError(NavError):
    """The map cannot realize the requested suite distribution."""


@dataclass(frozen=True)
class LaneChoice:
    road_name: str
    direction: str


@dataclass(frozen=True)
class Observation:
    hint: tuple[str, ...]  # names of the two nearest PoIs
    dest_name: str
    candidates: tuple[LaneChoice, ...]


@dataclass(frozen=True)
class NavTask:
    id: str
    start: str  # AoI id
    dest: str  # AoI id
    min_steps: int
    start_junction: str
    dest_junction: str
    dest_centroid: GeoPoint
    dest_name: str


@dataclass(frozen=True)
class NavState:
    junction: str
    position: GeoPoint
    steps_taken: int
    done: bool
    success: bool
    invalid_actions: int = 0


def _nearest_junction(city: CityMap, point: GeoPoint) -> str:
    hits = city.index.nearest(point, 1, ("junction",))
    if not hits:
        raise NavError("map has no junctions")
    return hits[0][0]


def make_nav_task(
    city: CityMap,
    graph: RoadGraph,
    start_aoi: str,
    dest_aoi: str,
    task_id: str,
    min_steps: Optional[int] = None,
) -> NavTask:
    start_j = _nearest_junction(city, city.aois[start_aoi].centroid)
    dest_c = city.aois[dest_aoi].centroid
    dest_j = _nearest_junction(city, dest_c)
    if min_steps is None:
        threshold = _threshold_junctions(city, dest_c)
        hops = min_hops_to_threshold(graph, start_j, threshold)
        if hops is None:
            raise NavError(f"destination {dest_aoi!r} unreachable from {start_aoi!r}")
        min_steps = hops
    return NavTask(
        id=task_id,
        start=start_aoi,
        dest=dest_aoi,
        min_steps=min_steps,
        start_junction=start_j,
        dest_junction=dest_j,
        dest_centroid=dest_c,
        dest_name=city.aois[dest_aoi].name,
    )


def _threshold_junctions(city: CityMap, dest_centroid: GeoPoint) -> set[str]:
    return {
        jid
        for jid, _, _ in city.index.within(
            dest_centroid, SUCCESS_RADIUS_M, ("junction",)
        )
    }


def min_hops_to_threshold(
    graph: RoadGraph, start_junction: str, threshold: set[str]
) -> Optional[int]:
    """BFS hop count from start to the first junction inside the threshold."""
    if start_junction in threshold:
        return 0
    seen = {start_junction}
    queue = collections.deque([(start_junction, 0)])
    while queue:
        node, hops = queue.popleft()
        for nb, _rid in graph.adjacency[node]:
            if nb in seen:
                continue
            if nb in threshold:
                return hops + 1
            seen.add(nb)
            queue.append((nb, hops + 1))
    return None


def _candidates(graph: RoadGraph, junction: str) -> list[tuple[LaneChoice, str, str]]:
    """(choice, far junction, segment id) per incident road, sorted by
    (road_name, direction); ambiguous (name, direction) pairs keep the
    lexicographically smallest far junction."""
    here = graph.node_location[junction]
    by_key: dict[tuple[str, str], tuple[str, str]] = {}
    for nb, rid in graph.adjacency[junction]:
        seg = graph.city.roads[rid]
        direction = quantize_direction(point_bearing(here, graph.node_location[nb]))
        key = (seg.name, direction)
        if key not in by_key or (nb, rid) < by_key[key]:
            by_key[key] = (nb, rid)
    return [
        (LaneChoice(name, direction), nb, rid)
        for (name, direction), (nb, rid) in sorted(by_key.items())
    ]


def start_episode(task: NavTask, city: CityMap, graph: RoadGraph) -> NavState:
    position = graph.node_location[task.start_junction]
    done = success = (
        point_distance(position, task.dest_centroid) <= SUCCESS_RADIUS_M
    )
    return NavState(
        junction=task.start_junction,
        position=position,
        steps_taken=0,
        done=done,
        success=success,
    )


def observe(state: NavState, task: NavTask, city: CityMap, graph: RoadGraph) -> Observation:
    if state.done:
        raise NavError("cannot observe a finished episode")
    hint = tuple(
        city.pois[pid].name
        for pid in nearest_pois(state.position, min(2, len(city.pois)), city)
    )
    cands = tuple(choice for choice, _, _ in _candidates(graph, state.junction))
    return Observation(hint=hint, dest_name=task.dest_name, candidates=cands)


def step(
    state: NavState,
    choice: Optional[LaneChoice],
    task: NavTask,
    graph: RoadGraph,
) -> NavState:
    """Advance one step. An unknown/invalid choice wastes the step."""
    if state.done:
        raise NavError("cannot step a finished episode")
    steps = state.steps_taken + 1
    match = None
    if choice is not None:
        for cand, nb, _rid in _candidates(graph, state.junction):
            if cand == choice:
                match = nb
                break
    if match is None:
        done = steps >= MAX_STEPS
        return replace(
            state,
            steps_taken=steps,
            invalid_actions=state.invalid_actions + 1,
            done=done,
            success=False,
        )
    position = graph.node_location[match]
    success = point_distance(position, task.dest_centroid) <= SUCCESS_RADIUS_M
    done = success or steps >= MAX_STEPS
    return NavState(
        junction=match,
        position=position,
        steps_taken=steps,
        done=done,
        success=success,
        invalid_actions=state.invalid_actions,
    )


def oracle_agent(
    observation: Observation, state: NavState, task: NavTask, graph: RoadGraph
) -> LaneChoice:
    """Greedy minimizer of the remaining shortest-path distance to the
    destination junction; ties broken by road name then direction."""
    best: Optional[tuple[float, str, str, LaneChoice]] = None
    for cand, nb, _rid in _candidates(graph, state.junction):
        if cand not in observation.candidates:
            continue
        remaining = shortest_path_length(graph, nb, task.dest_junction)
        key = (remaining, cand.road_name, cand.direction)
        if best is None or key < best[:3]:
            best = (*key, cand)
    if best is None:
        raise NavError("no candidates to choose from")
    return best[3]


Policy = Callable[[Observation, NavState, NavTask, RoadGraph], Optional[LaneChoice]]


def run_episode(
    task: NavTask,
    city: CityMap,
    graph: RoadGraph,
    policy: Policy,
) -> tuple[NavState, list[dict]]:
    """Drive one episode; returns the final state and per-step log records."""
    state = start_episode(task, city, graph)
    log: list[dict] = []
    while not state.done:
        obs = observe(state, task, city, graph)
        choice = policy(obs, state, task, graph)
        state = step(state, choice, task, graph)
        log.append(
            {
                "task_id": task.id,
                "step": state.steps_taken,
                "observation": {
                    "hint": list(obs.hint),
                    "dest_name": obs.dest_name,
                    "candidates": [
                        {"road_name": c.road_name, "direction": c.direction}
                        for c in obs.candidates
                    ],
                },
                "choice": (
                    {"road_name": choice.road_name, "direction": choice.direction}
                    if choice is not None
                    else None
                ),
                "distance_to_dest_m": point_distance(
                    state.position, task.dest_centroid
                ),
            }
        )
    return state, log


def random_agent(seed: int = 0) -> Policy:
    rng = random.Random(f"nav-random:{seed}")

    def policy(obs, state, task, graph):
        return obs.candidates[rng.randrange(len(obs.candidates))]

    return policy


def gen_nav_suite(
    city: CityMap,
    graph: RoadGraph,
    count: int = 21,
    seed: int = 0,
    max_attempts: int = 80,
    buckets: Optional[dict[int, int]] = None,
) -> list[NavTask]:
    """Sample tasks whose oracle-verified min_steps follow the default
    1..6 composition (mean ~4.5 for 21 tasks). A custom min_steps->weight
    map can override the composition, e.g. for small maps."""
    if len(city.aois) < 2:
        raise NavSuiteError("suite generation needs at least 2 AoIs")
    composition = buckets or _SUITE_BUCKETS
    buckets = sorted(composition)
    weights = {str(b): float(composition[b]) for b in buckets}
    alloc = _allocate(count, [str(b) for b in buckets], weights)

    aoi_ids = sorted(city.aois)
    anchor: dict[str, str] = {
        aid: _nearest_junction(city, city.aois[aid].centroid) for aid in aoi_ids
    }
    by_junction: dict[str, list[str]] = {}
    for aid, jid in anchor.items():
        by_junction.setdefault(jid, []).append(aid)

    tasks: list[NavTask] = []
    index = 0
    for bucket in buckets:
        target = alloc[str(bucket)]
        for _ in range(target):
            rng = random.Random(f"{seed}:nav:{index}")
            task = _sample_task(
                city, graph, rng, bucket, aoi_ids, by_junction,
                f"nav-{index:03d}", max_attempts,
            )
            if task is None:
                raise NavSuiteError(
                    f"could not realize a task with min_steps={bucket} after "
                    f"{max_attempts} attempts; map too small?"
                )
            tasks.append(task)
            index += 1
    return tasks


def _sample_task(
    city, graph, rng, target_steps, aoi_ids, by_junction, task_id, max_attempts
) -> Optional[NavTask]:
    for _ in range(max_attempts):
        dest = aoi_ids[rng.randrange(len(aoi_ids))]
        dest_c = city.aois[dest].centroid
        threshold = _threshold_junctions(city, dest_c)
        if not threshold:
            continue
        # hop levels outward from the threshold set
        level = {j: 0 for j in threshold}
        queue = collections.deque(sorted(threshold))
        while queue:
            node = queue.popleft()
            for nb, _rid in graph.adjacency[node]:
                if nb not in level:
                    level[nb] = level[node] + 1
                    queue.append(nb)
        starts = sorted(
            aid
            for jid, aids in by_junction.items()
            if level.get(jid) == target_steps
            for aid in aids
            if aid != dest
        )
        if not starts:
            continue
        start = starts[rng.randrange(len(starts))]
        task = make_nav_task(city, graph, start, dest, task_id,
                             min_steps=target_steps)
        final, _log = run_episode(
            task, city, graph,
            lambda obs, st, tk, gr: oracle_agent(obs, st, tk, gr),
        )
        if final.success and final.steps_taken == target_steps:
            return task
    return None


def suite_summary(results: Sequence[tuple[NavTask, NavState]]) -> dict:
    n = len(results)
    successes = sum(1 for _, s in results if s.success)
    steps = [s.steps_taken if s.success else MAX_STEPS for _, s in results]
    return {
        "success_rate": successes / n if n else 0.0,
        "mean_steps": sum(steps) / n if n else 0.0,
    }
