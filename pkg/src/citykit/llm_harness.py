"""Evaluation harness for chat-completions endpoints.

Drives any endpoint speaking the standard wire protocol (POST
<base_url>/chat/completions, response choices[0].message.content) through
the multiple-choice benchmark and the three composite tasks (mobility
prediction, trajectory generation, street navigation), then computes
accuracies, JSD-based mobility metrics, and navigation statistics.

Results are aggregated keyed by question/task id, so runs are
byte-identical regardless of the concurrency level.
"""

from __future__ import annotations

import csv
import json
import re
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

import httpx
import numpy as np

from .eval_bench import EvalQuestion
from .geo import COMPASS_WORDS, local_xy, offset_lonlat
from .map_core import CityMap, GeoPoint, nearby_entities
from .nav_sim import MAX_STEPS, NavTask, run_episode
from .routing import RoadGraph, point_distance

LABELS = string.ascii_uppercase  # option labels A..J (max 10 used)

# Histogram schemes for the trajectory-generation JSD metrics.
RADIUS_BIN_EDGES = [500.0 * i for i in range(21)]  # 0..10 km, then overflow
DISTANCE_BIN_EDGES = [250.0 * i for i in range(21)]  # 0..5 km, then overflow
DAILYLOC_BIN_EDGES = [0.5 + i for i in range(21)]  # 1..20 visits, then overflow

_SMOOTH_EPS = 1e-12


class EndpointError(Exception):
    pass


@dataclass
class ModelEndpoint:
    """Connection and decoding settings for a chat-completions endpoint."""

    base_url: str
    model: str
    api_key: Optional[str] = None
    temperature: float = 0.0
    max_tokens: int = 500
    repetition_penalty: float = 1.0
    max_in_flight: int = 4
    timeout_s: float = 60.0
    retries: int = 3
    backoff_s: float = 0.25

    def decoding_params(self) -> dict:
        return {
            "base_url": self.base_url,
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "repetition_penalty": self.repetition_penalty,
        }


def query_model(
    endpoint: ModelEndpoint,
    messages: Sequence[dict],
    client: Optional[httpx.Client] = None,
) -> str:
    """One completion; retries transport errors and 429/5xx with backoff."""
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    body = {
        "model": endpoint.model,
        "messages": list(messages),
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_tokens,
        "repetition_penalty": endpoint.repetition_penalty,
    }
    headers = {}
    if endpoint.api_key:
        headers["Authorization"] = f"Bearer {endpoint.api_key}"

    last_error: Optional[Exception] = None
    for attempt in range(endpoint.retries + 1):
        if attempt:
            time.sleep(endpoint.backoff_s * (2 ** (attempt - 1)))
        try:
            if client is not None:
                resp = client.post(url, json=body, headers=headers,
                                   timeout=endpoint.timeout_s)
            else:
                resp = httpx.post(url, json=body, headers=headers,
                                  timeout=endpoint.timeout_s)
        except httpx.HTTPError as e:
            last_error = e
            continue
        if resp.status_code == 429 or resp.status_code >= 500:
            last_error = EndpointError(f"HTTP {resp.status_code}")
            continue
        if resp.status_code != 200:
            raise EndpointError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise EndpointError(f"malformed response body: {e}") from None
        if not isinstance(content, str):
            raise EndpointError("malformed response body: content is not text")
        return content
    raise EndpointError(
        f"exhausted {endpoint.retries} retries against {url}: {last_error}"
    )


# ---------------------------------------------------------------------------
# Answer extraction
# ---------------------------------------------------------------------------

_UPPER_LABEL = re.compile(r"(?<![A-Za-z0-9])([A-J])(?![A-Za-z0-9])")
_LOWER_LABEL = re.compile(r"(?<![A-Za-z0-9])([a-j])(?=\))")


def extract_choice(answer_text: str, choices: Sequence[str]) -> Optional[int]:
    """Option index stated in the answer, or None (abstain).

    Precedence: standalone label letter ("B", "B.", "(B)", "b)") scanned
    left to right, then exact (case-insensitive) choice-text containment,
    then abstain.
    """
    hits = [
        (m.start(), m.group(1).upper())
        for m in _UPPER_LABEL.finditer(answer_text)
    ] + [
        (m.start(), m.group(1).upper())
        for m in _LOWER_LABEL.finditer(answer_text)
    ]
    for _, letter in sorted(hits):
        idx = LABELS.index(letter)
        if idx < len(choices):
            return idx

    haystack = answer_text.casefold()
    best: Optional[tuple[int, int, int]] = None  # (pos, -len, index)
    for i, choice in enumerate(choices):
        pos = haystack.find(choice.casefold())
        if pos >= 0:
            key = (pos, -len(choice), i)
            if best is None or key < best:
                best = key
    return best[2] if best else None


# ---------------------------------------------------------------------------
# Benchmark runner
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    group_accuracy: dict[str, float]
    task_stats: dict[str, dict]
    abstain_count: int
    transcripts: list[dict]
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "groups": self.group_accuracy,
            "tasks": self.task_stats,
            "abstain_count": self.abstain_count,
            "transcripts": self.transcripts,
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def render_question(q: EvalQuestion) -> str:
    lines = [q.stem, "", "Options:"]
    lines += [f"{LABELS[i]}. {c}" for i, c in enumerate(q.choices)]
    return "\n".join(lines)


def build_prompt(q: EvalQuestion, exemplars: Sequence[EvalQuestion]) -> str:
    parts = []
    for ex in exemplars:
        parts.append(render_question(ex) + f"\nAnswer: {LABELS[ex.answer_index]}\n")
    parts.append(
        render_question(q) + "\n\nAnswer with the letter of the single best option."
    )
    return "\n".join(parts)


def run_benchmark(
    questions: Sequence[EvalQuestion],
    endpoint: ModelEndpoint,
    shots: int = 0,
    exemplar_pool: Optional[Sequence[EvalQuestion]] = None,
    seed: Optional[int] = None,
    keep_transcripts: bool = True,
) -> EvalResult:
    """Evaluate all questions; abstentions (and endpoint failures) count wrong."""
    if shots:
        if not exemplar_pool or len(exemplar_pool) < shots:
            raise ValueError(f"shots={shots} requires an exemplar pool that large")
        q_ids = {q.id for q in questions}
        exemplars = sorted(exemplar_pool, key=lambda e: e.id)[:shots]
        if any(e.id in q_ids for e in exemplars):
            raise ValueError("exemplar pool overlaps the evaluated questions")
    else:
        exemplars = []

    def ask(q: EvalQuestion) -> dict:
        prompt = build_prompt(q, exemplars)
        error = None
        response = ""
        extracted = None
        try:
            response = query_model(
                endpoint, [{"role": "user", "content": prompt}], client
            )
            extracted = extract_choice(response, q.choices)
        except EndpointError as e:
            error = str(e)
        return {
            "id": q.id,
            "prompt": prompt,
            "response": response,
            "extracted": extracted,
            "correct": extracted == q.answer_index,
            "error": error,
        }

    with httpx.Client() as client:
        with ThreadPoolExecutor(max_workers=max(1, endpoint.max_in_flight)) as pool:
            rows = list(pool.map(ask, questions))
    rows.sort(key=lambda r: r["id"])
    by_id = {r["id"]: r for r in rows}

    task_stats: dict[str, dict] = {}
    for q in questions:
        key = f"{q.group}/{q.task}"
        st = task_stats.setdefault(
            key,
            {"group": q.group, "task": q.task, "n": 0, "correct": 0, "abstained": 0},
        )
        row = by_id[q.id]
        st["n"] += 1
        st["correct"] += int(row["correct"])
        st["abstained"] += int(row["extracted"] is None)
    for st in task_stats.values():
        st["accuracy"] = st["correct"] / st["n"] if st["n"] else 0.0

    group_accuracy: dict[str, float] = {}
    for group in sorted({st["group"] for st in task_stats.values()}):
        accs = [
            st["accuracy"] for st in task_stats.values() if st["group"] == group
        ]
        group_accuracy[group] = sum(accs) / len(accs)

    config = dict(endpoint.decoding_params())
    config["shots"] = shots
    if seed is not None:
        config["seed"] = seed
    return EvalResult(
        group_accuracy=group_accuracy,
        task_stats=dict(sorted(task_stats.items())),
        abstain_count=sum(1 for r in rows if r["extracted"] is None),
        transcripts=rows if keep_transcripts else [],
        config=config,
    )


def report_rows(result: EvalResult) -> list[dict]:
    """CSV rows: one per task type plus a summary row per group (CI/US/SR)."""
    order = {"city_image": 0, "urban_semantics": 1, "spatial_reasoning": 2}
    rows = []
    stats = sorted(
        result.task_stats.values(),
        key=lambda st: (order.get(st["group"], 9), st["task"]),
    )
    for st in stats:
        rows.append(
            {
                "group": st["group"],
                "task": st["task"],
                "questions": st["n"],
                "correct": st["correct"],
                "abstained": st["abstained"],
                "accuracy": f"{st['accuracy']:.4f}",
            }
        )
    for group in sorted(result.group_accuracy, key=lambda g: order.get(g, 9)):
        totals = [st for st in result.task_stats.values() if st["group"] == group]
        rows.append(
            {
                "group": group,
                "task": "(all)",
                "questions": sum(st["n"] for st in totals),
                "correct": sum(st["correct"] for st in totals),
                "abstained": sum(st["abstained"] for st in totals),
                "accuracy": f"{result.group_accuracy[group]:.4f}",
            }
        )
    return rows


def write_report_csv(result: EvalResult, path: str | Path) -> None:
    rows = report_rows(result)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["group", "task", "questions", "correct", "abstained",
                        "accuracy"],
        )
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Mobility metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRecord:
    subject: str
    visits: tuple[tuple[str, str], ...]  # (poi id, iso8601 timestamp)

    def __post_init__(self):
        if not self.visits:
            raise ValueError("trajectory needs at least one visit")
        stamps = [datetime.fromisoformat(t) for _, t in self.visits]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValueError("visit timestamps must be strictly increasing")


def load_trajectories(path: str | Path) -> list[TrajectoryRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(
                TrajectoryRecord(
                    subject=rec["subject"],
                    visits=tuple((v["poi"], v["t"]) for v in rec["visits"]),
                )
            )
    return out


def write_trajectories(records: Sequence[TrajectoryRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "subject": r.subject,
                        "visits": [{"poi": p, "t": t} for p, t in r.visits],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def radius_of_gyration(trajectory: TrajectoryRecord, city: CityMap) -> float:
    """RMS haversine distance of the visits from their planar centroid."""
    points = []
    for pid, _ in trajectory.visits:
        if pid not in city.pois:
            raise KeyError(f"unknown PoI id {pid!r}")
        points.append(city.pois[pid].location)
    lon0, lat0 = points[0].lon, points[0].lat
    xy = [local_xy(lon0, lat0, p.lon, p.lat) for p in points]
    cx = sum(x for x, _ in xy) / len(xy)
    cy = sum(y for _, y in xy) / len(xy)
    clon, clat = offset_lonlat(lon0, lat0, cx, cy)
    centroid = GeoPoint(clon, clat)
    sq = [point_distance(p, centroid) ** 2 for p in points]
    return float(np.sqrt(sum(sq) / len(sq)))


def step_distances(trajectory: TrajectoryRecord, city: CityMap) -> list[float]:
    locs = [city.pois[p].location for p, _ in trajectory.visits]
    return [point_distance(a, b) for a, b in zip(locs, locs[1:])]


def daily_location_counts(trajectory: TrajectoryRecord) -> list[int]:
    by_day: dict[str, set] = {}
    for pid, t in trajectory.visits:
        day = datetime.fromisoformat(t).date().isoformat()
        by_day.setdefault(day, set()).add(pid)
    return [len(v) for _, v in sorted(by_day.items())]


def histogram(values: Sequence[float], edges: Sequence[float]) -> np.ndarray:
    """Counts per bin, with one extra overflow bin past the last edge."""
    counts, _ = np.histogram(values, bins=edges)
    overflow = sum(1 for v in values if v >= edges[-1])
    return np.append(counts, overflow).astype(float)


def jsd(p: Sequence[float], q: Sequence[float]) -> float:
    """Jensen-Shannon divergence, base 2, in [0, 1].

    Inputs are histograms over the same binning; they are normalized and
    empty bins get eps=1e-12 smoothing before the divergence is taken.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"mismatched binning: {p.shape} vs {q.shape}")

    def norm(v: np.ndarray) -> np.ndarray:
        total = v.sum()
        if total <= 0:
            raise ValueError("histogram sums to zero")
        v = v / total
        v = np.where(v == 0.0, _SMOOTH_EPS, v)
        return v / v.sum()

    p = norm(p)
    q = norm(q)
    m = 0.5 * (p + q)

    def kl(a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(a * np.log2(a / b)))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


# ---------------------------------------------------------------------------
# Composite task: mobility prediction
# ---------------------------------------------------------------------------

def _normalize_name(text: str) -> str:
    return " ".join(text.casefold().strip().rstrip(".").split())


def _mobility_candidates(
    city: CityMap, truth_pid: str, rng
) -> list[str]:
    """8 distractor PoI ids: within 2 km of the truth, same category preferred."""
    truth = city.pois[truth_pid]
    nearby = nearby_entities(truth.location, 2000.0, ("poi",), city)
    same, other = [], []
    seen_names = {truth.name}
    for pid, _, _ in nearby:
        if pid == truth_pid:
            continue
        poi = city.pois[pid]
        if poi.name in seen_names:
            continue
        seen_names.add(poi.name)
        (same if poi.category == truth.category else other).append(pid)
    pool = same + other
    if len(pool) < 8:  # sparse area: fall back to nearest PoIs map-wide
        for pid, _, _ in city.index.nearest(truth.location, 64, ("poi",)):
            if pid != truth_pid and city.pois[pid].name not in seen_names:
                seen_names.add(city.pois[pid].name)
                pool.append(pid)
            if len(pool) >= 8:
                break
    if len(pool) < 8:
        raise ValueError("map too small for 9-candidate mobility prediction")
    head = pool[:12]
    rng.shuffle(head)
    return head[:8]


def run_mobility_prediction(
    trajectories: Sequence[TrajectoryRecord],
    city: CityMap,
    endpoint: ModelEndpoint,
    seed: int = 0,
) -> dict:
    """Hold out each trajectory's final visit; ask for it with 9 candidates
    (acc_multi) and free-form (acc_gen)."""
    import random as _random

    for t in trajectories:
        if len(t.visits) < 2:
            raise ValueError(f"trajectory {t.subject!r} has fewer than 2 visits")

    jobs = []
    for t in sorted(trajectories, key=lambda r: r.subject):
        rng = _random.Random(f"{seed}:mobility:{t.subject}")
        truth_pid, truth_time = t.visits[-1]
        history = t.visits[:-1]
        distractors = _mobility_candidates(city, truth_pid, rng)
        names = [city.pois[p].name for p in distractors]
        options = names + [city.pois[truth_pid].name]
        rng.shuffle(options)
        answer = options.index(city.pois[truth_pid].name)
        history_lines = "\n".join(
            f"- {city.pois[p].name} at {time_}" for p, time_ in history
        )
        base = (
            "A person visited these places in order:\n"
            f"{history_lines}\n"
            f"Where do they most likely go at {truth_time}?"
        )
        multi_prompt = (
            base
            + "\n\nOptions:\n"
            + "\n".join(f"{LABELS[i]}. {o}" for i, o in enumerate(options))
            + "\n\nAnswer with the letter of the single best option."
        )
        gen_prompt = base + "\nAnswer with the place name only."
        jobs.append(
            {
                "subject": t.subject,
                "options": options,
                "answer": answer,
                "truth_name": city.pois[truth_pid].name,
                "multi_prompt": multi_prompt,
                "gen_prompt": gen_prompt,
            }
        )

    def ask(job: dict) -> dict:
        out = {"subject": job["subject"], "multi_ok": False, "gen_ok": False}
        try:
            reply = query_model(
                endpoint, [{"role": "user", "content": job["multi_prompt"]}], client
            )
            out["multi_ok"] = extract_choice(reply, job["options"]) == job["answer"]
        except EndpointError:
            pass
        try:
            reply = query_model(
                endpoint, [{"role": "user", "content": job["gen_prompt"]}], client
            )
            out["gen_ok"] = _normalize_name(reply) == _normalize_name(
                job["truth_name"]
            )
        except EndpointError:
            pass
        return out

    with httpx.Client() as client:
        with ThreadPoolExecutor(max_workers=max(1, endpoint.max_in_flight)) as pool:
            rows = list(pool.map(ask, jobs))
    rows.sort(key=lambda r: r["subject"])
    n = len(rows)
    return {
        "n": n,
        "acc_multi": sum(r["multi_ok"] for r in rows) / n if n else 0.0,
        "acc_gen": sum(r["gen_ok"] for r in rows) / n if n else 0.0,
    }


# ---------------------------------------------------------------------------
# Composite task: trajectory generation
# ---------------------------------------------------------------------------

def load_agendas(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "agenda_id" not in rec or "items" not in rec:
                raise ValueError("agenda records need 'agenda_id' and 'items'")
            out.append(rec)
    return out


_AGENDA_LINE = re.compile(r"(\d{1,2}:\d{2})\s*\|\s*(.+)")


def run_trajectory_generation(
    agendas: Sequence[dict],
    city: CityMap,
    endpoint: ModelEndpoint,
    reference_trajectories: Sequence[TrajectoryRecord],
) -> dict:
    """Ask the model to assign a place to each agenda item, then compare the
    mobility-pattern distributions of generated vs reference trajectories."""

    def ask(idx_agenda) -> Optional[TrajectoryRecord]:
        idx, agenda = idx_agenda
        items = agenda["items"]
        lines = "\n".join(f"- {it['time']} {it['action']}" for it in items)
        prompt = (
            "You plan someone's day in this city. For each agenda item below, "
            "pick one specific place by name where it happens.\n"
            f"{lines}\n"
            "Reply with exactly one line per item, formatted as "
            "'HH:MM | place name'."
        )
        try:
            reply = query_model(
                endpoint, [{"role": "user", "content": prompt}], client
            )
        except EndpointError:
            skipped[0] += len(items)
            return None
        parsed = _AGENDA_LINE.findall(reply)
        day = f"2024-03-{(idx % 27) + 1:02d}"
        visits = []
        for k, it in enumerate(items):
            if k >= len(parsed):
                skipped[0] += 1
                continue
            _t, name = parsed[k]
            poi = city.poi_by_name(name.strip())
            if poi is None:
                skipped[0] += 1
                continue
            visits.append((poi.id, f"{day}T{it['time']}:00"))
        if len(visits) < 1:
            return None
        # drop non-increasing timestamps (agenda items should be ordered)
        pruned = [visits[0]]
        for v in visits[1:]:
            if v[1] > pruned[-1][1]:
                pruned.append(v)
        return TrajectoryRecord(subject=str(agenda["agenda_id"]), visits=tuple(pruned))

    skipped = [0]
    with httpx.Client() as client:
        with ThreadPoolExecutor(max_workers=max(1, endpoint.max_in_flight)) as pool:
            generated = [
                t for t in pool.map(ask, list(enumerate(agendas))) if t is not None
            ]
    generated.sort(key=lambda t: t.subject)
    return compare_trajectories(generated, reference_trajectories, city) | {
        "skipped_items": skipped[0],
        "n_generated": len(generated),
    }


def compare_trajectories(
    generated: Sequence[TrajectoryRecord],
    reference: Sequence[TrajectoryRecord],
    city: CityMap,
) -> dict:
    """JSD between generated and reference mobility-pattern distributions."""
    if not generated or not reference:
        raise ValueError("need at least one generated and one reference trajectory")

    def radii(tr):
        return [radius_of_gyration(t, city) for t in tr]

    def steps_of(tr):
        out = []
        for t in tr:
            out.extend(step_distances(t, city))
        return out

    def dailyloc(tr):
        out = []
        for t in tr:
            out.extend(daily_location_counts(t))
        return out

    radius_jsd = jsd(
        histogram(radii(generated), RADIUS_BIN_EDGES),
        histogram(radii(reference), RADIUS_BIN_EDGES),
    )
    gen_steps = steps_of(generated)
    ref_steps = steps_of(reference)
    if gen_steps and ref_steps:
        distance_jsd = jsd(
            histogram(gen_steps, DISTANCE_BIN_EDGES),
            histogram(ref_steps, DISTANCE_BIN_EDGES),
        )
    else:
        distance_jsd = 1.0
    dailyloc_jsd = jsd(
        histogram(dailyloc(generated), DAILYLOC_BIN_EDGES),
        histogram(dailyloc(reference), DAILYLOC_BIN_EDGES),
    )
    return {
        "radius_jsd": radius_jsd,
        "distance_jsd": distance_jsd,
        "dailyloc_jsd": dailyloc_jsd,
    }


# ---------------------------------------------------------------------------
# Composite task: street navigation
# ---------------------------------------------------------------------------

def _nav_prompt(task: NavTask, obs, state) -> tuple[str, list[str]]:
    option_texts = [
        f"head {COMPASS_WORDS[c.direction]} along {c.road_name}"
        for c in obs.candidates
    ]
    near = " and ".join(obs.hint) if obs.hint else "nothing notable"
    prompt = (
        f"[navigation task {task.id} step {state.steps_taken}]\n"
        f"You are walking through the city to reach {obs.dest_name}.\n"
        f"You are currently near {near}.\n"
        "Your candidate roads are:\n"
        + "\n".join(f"{LABELS[i]}. {t}" for i, t in enumerate(option_texts))
        + "\nReply with the letter of the single best choice."
    )
    return prompt, option_texts


def run_navigation(
    endpoint: ModelEndpoint,
    suite: Sequence[NavTask],
    city: CityMap,
    graph: RoadGraph,
    log_path: Optional[str | Path] = None,
) -> dict:
    """Drive the model through every task; failures count MAX_STEPS steps."""
    all_logs: list[dict] = []
    per_task = []
    with httpx.Client() as client:
        for task in sorted(suite, key=lambda t: t.id):

            def policy(obs, state, task_, graph_):
                prompt, option_texts = _nav_prompt(task_, obs, state)
                try:
                    reply = query_model(
                        endpoint, [{"role": "user", "content": prompt}], client
                    )
                except EndpointError:
                    return None
                idx = extract_choice(reply, option_texts)
                return obs.candidates[idx] if idx is not None else None

            final, log = run_episode(task, city, graph, policy)
            all_logs.extend(log)
            per_task.append(
                {
                    "task_id": task.id,
                    "min_steps": task.min_steps,
                    "steps": final.steps_taken if final.success else MAX_STEPS,
                    "success": final.success,
                    "invalid_actions": final.invalid_actions,
                }
            )
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for entry in all_logs:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    n = len(per_task)
    return {
        "success_rate": sum(t["success"] for t in per_task) / n if n else 0.0,
        "mean_steps": sum(t["steps"] for t in per_task) / n if n else 0.0,
        "tasks": per_task,
    }
