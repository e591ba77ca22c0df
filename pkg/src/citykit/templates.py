"""Static English question/answer templates for the instruction generators.

Each question type ships at least 3 phrasings. A custom set can be loaded
from a JSON file ({question_type: [template, ...]}) to replace or extend
the bundled ones; slot names must match what the generators provide.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

DEFAULT_TEMPLATES: dict[str, list[str]] = {
    # single-entity QA
    "category": [
        "What kind of place is {name}?",
        "What category does {name} belong to?",
        "If I go to {name}, what type of venue should I expect?",
    ],
    "address": [
        "Where is {name} located?",
        "What is the address of {name}?",
        "How would you describe the location of {name}?",
    ],
    "coordinates": [
        "What are the coordinates of {name}?",
        "Can you give me the longitude and latitude of {name}?",
        "What is the exact position of {name}?",
    ],
    "nearby": [
        "What can I find near {name}?",
        "Which places are close to {name}?",
        "What is in the immediate surroundings of {name}?",
    ],
    "road_endpoints": [
        "Which junctions mark the two ends of {road}?",
        "Where does {road} begin and end?",
        "Between which junctions does {road} run?",
    ],
    "road_connections": [
        "Which other roads does {road} connect with?",
        "What roads can I reach directly from {road}?",
        "Which streets intersect {road}?",
    ],
    "junction_roads": [
        "Which roads meet at junction {junction}?",
        "What streets come together at junction {junction}?",
        "Standing at junction {junction}, which roads can I take?",
    ],
    "junction_nearby": [
        "What places are near junction {junction}?",
        "Which venues sit close to junction {junction}?",
        "What can I see around junction {junction}?",
    ],
    # multi-step walks
    "route": [
        "How do I walk from junction {origin} to junction {dest}?",
        "Please give me walking directions from junction {origin} to junction {dest}.",
        "I'm at junction {origin}. What is a good walking route to junction {dest}?",
    ],
    # explicit reasoning over a walk
    "reasoning_distance": [
        "You take the following walk:\n{walk}\nAbout how far do you travel in total?",
        "Here is a walk:\n{walk}\nRoughly what total distance does it cover?",
        "Consider this walk:\n{walk}\nEstimate the overall distance traveled.",
    ],
    "reasoning_direction": [
        "You take the following walk:\n{walk}\nIn which compass direction does the "
        "end point lie from the start?",
        "Here is a walk:\n{walk}\nOverall, which direction have you moved in?",
        "Consider this walk:\n{walk}\nWhich way is the destination from the origin, "
        "roughly?",
    ],
    "reasoning_distance_followup": [
        "And about how far is the whole walk in total?",
        "Also, what total distance does that walk cover, roughly?",
        "One more thing: approximately how many meters is the full walk?",
    ],
    "reasoning_direction_followup": [
        "And overall, in which compass direction does this walk take you?",
        "Also, which way is the end point from the start, roughly?",
        "One more thing: what is the overall direction of that walk?",
    ],
}

# Assistant-side phrasings; the slot values are what the checkers verify.
ANSWER_TEMPLATES: dict[str, list[str]] = {
    "category": [
        "{name} is a {category} venue.",
        "{name} belongs to the {category} category.",
    ],
    "address": [
        "{name} is {address}.",
        "You will find {name} {address}.",
    ],
    "coordinates": [
        "{name} sits at longitude {lon}, latitude {lat}.",
        "The position of {name} is longitude {lon}, latitude {lat}.",
    ],
    "nearby": [
        "Close to {name} you can find: {items}.",
        "Around {name} there are these places: {items}.",
    ],
    "road_endpoints": [
        "{road} runs between junction {a} and junction {b}.",
        "The two ends of {road} are junction {a} and junction {b}.",
    ],
    "road_connections": [
        "{road} connects with these roads: {items}.",
        "From {road} you can directly reach: {items}.",
    ],
    "junction_roads": [
        "The roads meeting at junction {junction} are: {items}.",
        "At junction {junction} you can take: {items}.",
    ],
    "junction_nearby": [
        "Near junction {junction} you can find: {items}.",
        "Around junction {junction} there are these places: {items}.",
    ],
}


@dataclass(frozen=True)
class TemplateSet:
    """question_type -> list of format strings with named slots."""

    templates: dict[str, list[str]]

    def validate(self, required_types: tuple[str, ...], min_count: int = 3) -> None:
        for qtype in required_types:
            n = len(self.templates.get(qtype, ()))
            if n < min_count:
                raise ValueError(
                    f"question type {qtype!r} has {n} templates, needs >= {min_count}"
                )

    def pick(self, rng: random.Random, qtype: str) -> tuple[int, str]:
        options = self.templates[qtype]
        idx = rng.randrange(len(options))
        return idx, options[idx]


DEFAULT_TEMPLATE_SET = TemplateSet(DEFAULT_TEMPLATES)


def load_templates(path: str | Path) -> TemplateSet:
    """Load a template set from JSON, overlaying the bundled defaults."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or not all(
        isinstance(k, str)
        and isinstance(v, list)
        and all(isinstance(t, str) for t in v)
        for k, v in data.items()
    ):
        raise ValueError("template file must map question types to string lists")
    merged = {**DEFAULT_TEMPLATES, **data}
    return TemplateSet(merged)
