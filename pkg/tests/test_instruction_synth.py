from __future__ import annotations

import json

import pytest

from citykit.instruction_synth import (
    QA_TYPES,
    InstructionSample,
    SynthError,
    export_dataset,
    gen_cityqa,
    gen_cityreasoning,
    gen_citywalk,
    load_dataset,
    parse_walk_legs,
    verify_citywalk_sample,
    verify_cityqa_sample,
    verify_reasoning_sample,
    verify_sample,
    walk_legs,
)
from citykit.routing import shortest_path
from citykit.templates import DEFAULT_TEMPLATES


class TestSampleInvariants:
    def test_roles_must_alternate(self):
        with pytest.raises(ValueError):
            InstructionSample(
                id="x", source="cityqa",
                messages=(
                    {"role": "assistant", "content": "hi"},
                    {"role": "user", "content": "hello"},
                ),
            )

    def test_pairs_required(self):
        with pytest.raises(ValueError):
            InstructionSample(
                id="x", source="cityqa",
                messages=({"role": "user", "content": "q"},),
            )


class TestCityQA:
    def test_uniform_mix_one_per_type(self, square_city):
        samples = gen_cityqa(square_city, 8, seed=1)
        assert len(samples) == 8
        assert sorted(s.meta["question_type"] for s in samples) == sorted(QA_TYPES)
        for s in samples:
            assert verify_cityqa_sample(s, square_city), s.meta

    def test_deterministic(self, square_city):
        a = [s.to_record() for s in gen_cityqa(square_city, 24, seed=9)]
        b = [s.to_record() for s in gen_cityqa(square_city, 24, seed=9)]
        assert a == b

    def test_seed_changes_output(self, square_city):
        a = [s.to_record() for s in gen_cityqa(square_city, 24, seed=1)]
        b = [s.to_record() for s in gen_cityqa(square_city, 24, seed=2)]
        assert a != b

    def test_count_exact_on_larger_map(self, city_small):
        samples = gen_cityqa(city_small, 123, seed=4)
        assert len(samples) == 123
        assert all(verify_cityqa_sample(s, city_small) for s in samples)

    def test_ground_truth_checker_catches_tampering(self, city_small):
        sample = gen_cityqa(city_small, 8, seed=4)[0]
        bad = InstructionSample(
            id=sample.id,
            source=sample.source,
            messages=(
                sample.messages[0],
                {"role": "assistant", "content": "It is a spaceship hangar."},
            ),
            meta=sample.meta,
        )
        assert not verify_cityqa_sample(bad, city_small)

    def test_type_mix_configurable(self, city_small):
        samples = gen_cityqa(
            city_small, 40, seed=4, type_mix={"category": 1.0, "nearby": 1.0}
        )
        types = {s.meta["question_type"] for s in samples}
        assert types == {"category", "nearby"}
        assert len(samples) == 40

    def test_template_coverage(self, city_small):
        samples = gen_cityqa(city_small, 8 * 100, seed=6)
        used: dict[str, set] = {}
        for s in samples:
            used.setdefault(s.meta["question_type"], set()).add(s.meta["template"])
        for qtype, idxs in used.items():
            assert idxs == set(range(len(DEFAULT_TEMPLATES[qtype]))), qtype

    def test_missing_entities_error(self, elm_city):
        # elm map has no PoIs / AoIs at all
        with pytest.raises(SynthError):
            gen_cityqa(elm_city, 8, seed=0)


class TestCityWalk:
    def test_two_junction_single_step(self, elm_city):
        from citykit.routing import build_road_graph

        graph = build_road_graph(elm_city)
        samples = gen_citywalk(
            elm_city, graph, 1, seed=0, length_window=(100.0, 400.0)
        )
        text = samples[0].messages[1]["content"]
        assert text.count("Walk ") == 1
        assert "200" in text

    def test_narrated_directions_match_geometry(self, city_small, graph_small):
        samples = gen_citywalk(
            city_small, graph_small, 50, seed=3, length_window=(400.0, 2500.0)
        )
        for s in samples:
            o, d = s.meta["od"]
            route = shortest_path(graph_small, o, d)
            legs = parse_walk_legs(
                s.messages[1]["content"].replace("Walk ", "head ")
            )
            assert [c for c, _ in legs] == [st.direction for st in route.steps]
            assert verify_citywalk_sample(s, city_small, graph_small)

    def test_route_length_within_window(self, city_small, graph_small):
        window = (600.0, 1800.0)
        for s in gen_citywalk(city_small, graph_small, 30, seed=5,
                              length_window=window):
            o, d = s.meta["od"]
            total = shortest_path(graph_small, o, d).total_length
            assert window[0] <= total <= window[1]

    def test_infeasible_window_raises(self, elm_city):
        from citykit.routing import build_road_graph

        graph = build_road_graph(elm_city)
        with pytest.raises(SynthError):
            gen_citywalk(elm_city, graph, 1, seed=0,
                         length_window=(5000.0, 9000.0), max_attempts=20)

    def test_deterministic(self, city_small, graph_small):
        a = [s.to_record() for s in gen_citywalk(city_small, graph_small, 20, seed=2)]
        b = [s.to_record() for s in gen_citywalk(city_small, graph_small, 20, seed=2)]
        assert a == b


class TestCityReasoning:
    def test_distance_chain_states_and_total(self, graph_small):
        samples = gen_cityreasoning(graph_small, 10, seed=1,
                                    length_window=(400.0, 2500.0))
        for s in samples:
            assert verify_reasoning_sample(s)

    def test_direction_answer_sound(self, graph_small):
        samples = gen_cityreasoning(graph_small, 40, seed=2,
                                    length_window=(400.0, 2500.0))
        directions = [s for s in samples if s.meta["kinds"][0] == "direction"]
        assert directions
        for s in directions:
            assert verify_reasoning_sample(s)

    def test_two_round_fraction_and_mean(self, graph_small):
        n = 200
        samples = gen_cityreasoning(graph_small, n, seed=3,
                                    length_window=(400.0, 2500.0))
        rounds = [s.rounds for s in samples]
        assert sum(rounds) / n == pytest.approx(1.13, abs=0.005)
        two = [s for s in samples if s.rounds == 2]
        assert len(two) == round(0.13 * n)
        for s in two:
            assert s.meta["kinds"][0] != s.meta["kinds"][1]
            assert verify_reasoning_sample(s)

    def test_chain_matches_worked_example(self):
        # legs 120 m, 250 m, 80 m -> running sums 120, 370, 450
        from citykit.instruction_synth import _distance_chain

        lines, total10 = _distance_chain(
            [("N", 120, "A"), ("E", 250, "B"), ("N", 80, "C")]
        )
        assert total10 == 450
        joined = "\n".join(lines)
        assert "120 meters so far" in joined
        assert "370 meters so far" in joined
        assert "450 meters so far" in joined

    def test_direction_example_north(self):
        from citykit.instruction_synth import _direction_chain

        lines, word = _direction_chain([("N", 300, "A"), ("E", 100, "B")])
        assert word == "north"

    def test_tampered_total_caught(self, graph_small):
        s = gen_cityreasoning(graph_small, 2, seed=5,
                              length_window=(400.0, 2500.0))[0]
        text = s.messages[1]["content"]
        if "total is about" in text:
            broken = text.replace("total is about", "total is about 9", 1)
            bad = InstructionSample(
                id=s.id, source=s.source,
                messages=(s.messages[0], {"role": "assistant", "content": broken}),
                meta=s.meta,
            )
            assert not verify_reasoning_sample(bad)


class TestExport:
    def test_roundtrip(self, tmp_path, city_small, graph_small):
        samples = gen_cityqa(city_small, 16, seed=7)
        samples += gen_citywalk(city_small, graph_small, 4, seed=7)
        path = tmp_path / "data.jsonl"
        export_dataset(samples, path)
        loaded = load_dataset(path)
        assert [s.to_record() for s in loaded] == [
            s.to_record() for s in sorted(samples, key=lambda x: x.id)
        ]

    def test_empty_list_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        export_dataset([], path)
        assert path.read_text() == ""

    def test_line_count_matches(self, tmp_path, city_small):
        samples = gen_cityqa(city_small, 200, seed=8)
        path = tmp_path / "x.jsonl"
        export_dataset(samples, path)
        lines = [l for l in path.read_text().splitlines() if l]
        assert len(lines) == 200
        for line in lines[:10]:
            rec = json.loads(line)
            assert set(rec) == {"id", "source", "messages", "meta"}

    def test_verify_dispatch(self, city_small, graph_small):
        qa = gen_cityqa(city_small, 8, seed=1)[0]
        walk = gen_citywalk(city_small, graph_small, 1, seed=1)[0]
        reason = gen_cityreasoning(graph_small, 1, seed=1)[0]
        assert verify_sample(qa, city_small)
        assert verify_sample(walk, city_small, graph_small)
        assert verify_sample(reason, city_small)
