from __future__ import annotations

import pytest

from citykit.map_core import nearest_pois
from citykit.nav_sim import (
    MAX_STEPS,
    SUCCESS_RADIUS_M,
    LaneChoice,
    NavError,
    gen_nav_suite,
    make_nav_task,
    observe,
    oracle_agent,
    random_agent,
    run_episode,
    start_episode,
    step,
    suite_summary,
)
from citykit.routing import point_distance


@pytest.fixture(scope="module")
def suite_small(city5k, graph5k):
    return gen_nav_suite(city5k, graph5k, count=12, seed=2)


@pytest.fixture(scope="module")
def one_task(suite_small):
    return max(suite_small, key=lambda t: t.min_steps)


class TestEpisodeLifecycle:
    def test_start_state(self, city5k, graph5k, one_task):
        state = start_episode(one_task, city5k, graph5k)
        assert state.steps_taken == 0
        assert not state.done
        assert state.junction == one_task.start_junction

    def test_start_deterministic(self, city5k, graph5k, one_task):
        a = start_episode(one_task, city5k, graph5k)
        b = start_episode(one_task, city5k, graph5k)
        assert a == b

    def test_immediate_success_when_within_threshold(self, city5k, graph5k):
        aois = sorted(city5k.aois)
        # destination equal to start: trivially within the threshold
        task = make_nav_task(city5k, graph5k, aois[0], aois[0], "t0",
                             min_steps=1)
        state = start_episode(task, city5k, graph5k)
        assert state.done and state.success and state.steps_taken == 0

    def test_observation_fields(self, city5k, graph5k, one_task):
        state = start_episode(one_task, city5k, graph5k)
        obs = observe(state, one_task, city5k, graph5k)
        assert obs.dest_name == city5k.aois[one_task.dest].name
        expected_hint = [
            city5k.pois[p].name
            for p in nearest_pois(state.position, 2, city5k)
        ]
        assert list(obs.hint) == expected_hint
        incident = city5k.junctions[state.junction].incident_roads
        assert len(obs.candidates) == len(incident)
        assert list(obs.candidates) == sorted(
            obs.candidates, key=lambda c: (c.road_name, c.direction)
        )

    def test_observe_after_done_raises(self, city5k, graph5k):
        aois = sorted(city5k.aois)
        task = make_nav_task(city5k, graph5k, aois[0], aois[0], "t0",
                             min_steps=1)
        state = start_episode(task, city5k, graph5k)
        with pytest.raises(NavError):
            observe(state, task, city5k, graph5k)

    def test_valid_step_moves_to_far_junction(self, city5k, graph5k,
                                              one_task):
        state = start_episode(one_task, city5k, graph5k)
        obs = observe(state, one_task, city5k, graph5k)
        nxt = step(state, obs.candidates[0], one_task, graph5k)
        assert nxt.steps_taken == 1
        assert nxt.junction != state.junction

    def test_invalid_choice_wastes_step(self, city5k, graph5k, one_task):
        state = start_episode(one_task, city5k, graph5k)
        bogus = LaneChoice(road_name="No Such Road", direction="N")
        nxt = step(state, bogus, one_task, graph5k)
        assert nxt.steps_taken == 1
        assert nxt.junction == state.junction
        assert nxt.invalid_actions == 1
        assert not nxt.done

    def test_thirty_wasted_steps_fail(self, city5k, graph5k, one_task):
        state = start_episode(one_task, city5k, graph5k)
        for _ in range(MAX_STEPS):
            state = step(state, None, one_task, graph5k)
        assert state.done and not state.success
        assert state.steps_taken == MAX_STEPS


class TestOracle:
    def test_single_candidate_is_chosen(self, city5k, graph5k,
                                        suite_small):
        # find a task whose start junction is a dead end, else synthesize by
        # checking the oracle picks a member of the candidate set
        task = suite_small[0]
        state = start_episode(task, city5k, graph5k)
        obs = observe(state, task, city5k, graph5k)
        choice = oracle_agent(obs, state, task, graph5k)
        assert choice in obs.candidates

    def test_oracle_steps_equal_min_steps(self, city5k, graph5k,
                                          suite_small):
        for task in suite_small:
            final, _ = run_episode(task, city5k, graph5k, oracle_agent)
            assert final.success
            assert final.steps_taken == task.min_steps

    def test_oracle_beats_random(self, city5k, graph5k, suite_small):
        hard = [t for t in suite_small if t.min_steps >= 3]
        oracle_steps = 0
        random_steps = 0
        successes = 0
        for seed, task in enumerate(hard):
            o_final, _ = run_episode(task, city5k, graph5k, oracle_agent)
            r_final, _ = run_episode(
                task, city5k, graph5k, random_agent(seed)
            )
            oracle_steps += o_final.steps_taken
            random_steps += r_final.steps_taken if r_final.success else MAX_STEPS
            successes += r_final.success
        assert oracle_steps < random_steps
        assert successes < len(hard) + 1  # random is never better than oracle

    def test_failed_episode_reports_thirty(self, city5k, graph5k,
                                           suite_small):
        task = max(suite_small, key=lambda t: t.min_steps)

        def away_policy(obs, state, task_, graph_):
            # maximize remaining distance: guaranteed failure
            worst = None
            from citykit.nav_sim import _candidates
            from citykit.routing import shortest_path_length

            for cand, nb, _rid in _candidates(graph_, state.junction):
                remaining = shortest_path_length(graph_, nb, task_.dest_junction)
                key = (-remaining, cand.road_name)
                if worst is None or key < worst[0]:
                    worst = (key, cand)
            return worst[1]

        final, log = run_episode(task, city5k, graph5k, away_policy)
        assert final.done and not final.success
        assert final.steps_taken == MAX_STEPS
        assert len(log) == MAX_STEPS

    def test_success_iff_within_threshold(self, city5k, graph5k,
                                          suite_small):
        for task in suite_small[:6]:
            final, log = run_episode(task, city5k, graph5k, oracle_agent)
            dist = point_distance(final.position, task.dest_centroid)
            assert final.success == (dist <= SUCCESS_RADIUS_M)
            assert log[-1]["distance_to_dest_m"] == pytest.approx(dist)


class TestSuiteGeneration:
    def test_default_suite_shape(self, city5k, graph5k):
        suite = gen_nav_suite(city5k, graph5k, count=21, seed=0)
        assert len(suite) == 21
        steps = [t.min_steps for t in suite]
        assert set(steps) == {1, 2, 3, 4, 5, 6}
        assert 4.0 <= sum(steps) / len(steps) <= 5.0

    def test_min_steps_self_consistent(self, city5k, graph5k,
                                       suite_small):
        for task in suite_small:
            final, _ = run_episode(task, city5k, graph5k, oracle_agent)
            assert final.steps_taken == task.min_steps

    def test_summary_counts_failures_as_thirty(self, city5k, graph5k,
                                               suite_small):
        results = []
        for task in suite_small[:4]:
            final, _ = run_episode(task, city5k, graph5k, oracle_agent)
            results.append((task, final))
        # forge one failure
        import dataclasses

        failed = dataclasses.replace(
            results[0][1], success=False, steps_taken=MAX_STEPS, done=True
        )
        results[0] = (results[0][0], failed)
        summary = suite_summary(results)
        expect_steps = [MAX_STEPS] + [s.steps_taken for _, s in results[1:]]
        assert summary["mean_steps"] == pytest.approx(
            sum(expect_steps) / len(expect_steps)
        )
        assert summary["success_rate"] == pytest.approx(3 / 4)
