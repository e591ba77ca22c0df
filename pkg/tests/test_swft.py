from __future__ import annotations

import json
import math
import random

import pytest

from citykit.swft import (
    LossRecord,
    SampleWeight,
    SwftError,
    TokenLoss,
    compute_weights,
    export_weighted_dataset,
    flag_anomalies,
    load_loss_records,
    weighted_loss,
    write_weights,
)


def records(base, warm):
    return [
        LossRecord(f"s{i}", b, w) for i, (b, w) in enumerate(zip(base, warm))
    ]


def oracle_weights(base, warm):
    # independent arithmetic: explicit loop, no numpy
    denom = math.sqrt(sum(b * b for b in base))
    return [abs(w - b) / denom for b, w in zip(base, warm)]


class TestComputeWeights:
    def test_no_change_zero_weights(self):
        out = compute_weights(records([3.0, 4.0], [3.0, 4.0]))
        assert [w.weight for w in out] == [0.0, 0.0]

    def test_worked_example_single_change(self):
        out = compute_weights(records([3.0, 4.0], [1.0, 4.0]))
        assert [w.weight for w in out] == pytest.approx([0.4, 0.0], rel=1e-12)

    def test_worked_example_full_drop(self):
        out = compute_weights(records([3.0, 4.0], [0.0, 0.0]))
        assert [w.weight for w in out] == pytest.approx([0.6, 0.8], rel=1e-12)

    def test_matches_oracle_on_random_vectors(self):
        rng = random.Random(12)
        for _ in range(25):
            n = rng.randint(1, 40)
            base = [rng.uniform(0.01, 8.0) for _ in range(n)]
            warm = [rng.uniform(0.0, 8.0) for _ in range(n)]
            got = [w.weight for w in compute_weights(records(base, warm))]
            expect = oracle_weights(base, warm)
            for g, e in zip(got, expect):
                assert g == pytest.approx(e, rel=1e-12)

    def test_zero_weight_iff_no_change(self):
        rng = random.Random(3)
        base = [rng.uniform(0.5, 4.0) for _ in range(30)]
        warm = list(base)
        warm[7] = base[7] + 0.25
        out = compute_weights(records(base, warm))
        for i, w in enumerate(out):
            assert (w.weight == 0.0) == (i != 7)

    def test_all_zero_base_rejected(self):
        with pytest.raises(SwftError):
            compute_weights(records([0.0, 0.0], [1.0, 2.0]))

    def test_empty_rejected(self):
        with pytest.raises(SwftError):
            compute_weights([])

    def test_negative_loss_rejected(self):
        with pytest.raises(ValueError):
            LossRecord("x", -0.1, 0.0)
        with pytest.raises(ValueError):
            LossRecord("x", 0.1, float("inf"))

    def test_permutation_equivariance(self):
        rng = random.Random(8)
        base = [rng.uniform(0.1, 5.0) for _ in range(20)]
        warm = [rng.uniform(0.0, 5.0) for _ in range(20)]
        recs = records(base, warm)
        out = {w.sample_id: w.weight for w in compute_weights(recs)}
        perm = recs[::-1]
        out_perm = {w.sample_id: w.weight for w in compute_weights(perm)}
        assert out == out_perm

    def test_joint_scaling_invariance_exact_for_pow2(self):
        rng = random.Random(9)
        base = [rng.uniform(0.1, 5.0) for _ in range(15)]
        warm = [rng.uniform(0.0, 5.0) for _ in range(15)]
        ref = [w.weight for w in compute_weights(records(base, warm))]
        for c in (2.0, 0.5, 4.0, 8.0):
            scaled = compute_weights(
                records([c * b for b in base], [c * w for w in warm])
            )
            assert [w.weight for w in scaled] == ref

    def test_joint_scaling_near_exact_generic(self):
        rng = random.Random(10)
        base = [rng.uniform(0.1, 5.0) for _ in range(15)]
        warm = [rng.uniform(0.0, 5.0) for _ in range(15)]
        ref = [w.weight for w in compute_weights(records(base, warm))]
        scaled = compute_weights(
            records([3.0 * b for b in base], [3.0 * w for w in warm])
        )
        for got, expect in zip((w.weight for w in scaled), ref):
            assert got == pytest.approx(expect, rel=1e-12)

    def test_locality_of_single_edit(self):
        base = [1.0, 2.0, 3.0, 4.0]
        warm = [0.5, 2.0, 2.5, 4.0]
        before = [w.weight for w in compute_weights(records(base, warm))]
        warm2 = list(warm)
        warm2[2] = 3.0  # only record 2's warm loss changes (base unchanged)
        after = [w.weight for w in compute_weights(records(base, warm2))]
        assert after[0] == before[0]
        assert after[1] == before[1]
        assert after[3] == before[3]
        assert after[2] != before[2]


class TestWeightedLoss:
    def test_all_zero_weights(self):
        tl = [TokenLoss("a", (0.5, 1.5)), TokenLoss("b", (2.0,))]
        ws = [SampleWeight("a", 0.0), SampleWeight("b", 0.0)]
        assert weighted_loss(tl, ws) == 0.0

    def test_single_sample_unit_weight(self):
        assert weighted_loss(
            [TokenLoss("a", (0.5, 1.5))], [SampleWeight("a", 1.0)]
        ) == pytest.approx(2.0)

    def test_two_sample_hand_arithmetic(self):
        tl = [TokenLoss("a", (1.0, 1.0)), TokenLoss("b", (1.0, 1.0, 1.0))]
        ws = [SampleWeight("a", 0.5), SampleWeight("b", 2.0)]
        assert weighted_loss(tl, ws) == pytest.approx((0.5 * 2 + 2 * 3) / 2)

    def test_linearity_in_weights_and_tokens(self):
        rng = random.Random(5)
        tl = [
            TokenLoss(f"s{i}", tuple(rng.uniform(0, 2) for _ in range(rng.randint(1, 6))))
            for i in range(10)
        ]
        ws = [SampleWeight(f"s{i}", rng.uniform(0, 2)) for i in range(10)]
        base_val = weighted_loss(tl, ws)
        double_w = [SampleWeight(w.sample_id, 2 * w.weight) for w in ws]
        assert weighted_loss(tl, double_w) == pytest.approx(2 * base_val, rel=1e-12)
        double_t = [
            TokenLoss(t.sample_id, tuple(2 * x for x in t.token_losses)) for t in tl
        ]
        assert weighted_loss(double_t, ws) == pytest.approx(2 * base_val, rel=1e-12)

    def test_missing_weight_rejected(self):
        with pytest.raises(SwftError):
            weighted_loss([TokenLoss("a", (1.0,))], [SampleWeight("b", 1.0)])

    def test_empty_token_list_rejected(self):
        with pytest.raises(ValueError):
            TokenLoss("a", ())


class TestAnomalies:
    def test_uniform_dataset_empty(self):
        recs = records([2.0] * 20, [1.0] * 20)
        assert flag_anomalies(recs) == []

    def test_planted_outlier_flagged(self):
        base = [1.0] * 19 + [10.0]
        warm = [0.5] * 19 + [9.9]
        recs = records(base, warm)
        assert flag_anomalies(recs) == ["s19"]

    def test_exactly_planted_anomalies_flagged(self):
        rng = random.Random(21)
        base, warm = [], []
        for _ in range(100):
            b = rng.uniform(1.0, 2.0)
            base.append(b)
            warm.append(b * 0.5)
        planted_ids = []
        for i in range(5):
            b = rng.uniform(9.0, 11.0)
            base.append(b)
            warm.append(b * 0.98)  # barely learns
            planted_ids.append(f"s{100 + i}")
        recs = records(base, warm)
        assert flag_anomalies(recs) == planted_ids

    def test_too_few_records_rejected(self):
        with pytest.raises(SwftError):
            flag_anomalies(records([1.0] * 5, [1.0] * 5))


class TestFiles:
    def test_losses_roundtrip(self, tmp_path):
        path = tmp_path / "losses.jsonl"
        path.write_text(
            '{"id":"a","base_loss":3.0,"warm_loss":1.0}\n'
            '{"id":"b","base_loss":4.0,"warm_loss":4.0}\n'
        )
        recs = load_loss_records(path)
        assert [r.sample_id for r in recs] == ["a", "b"]
        weights = compute_weights(recs)
        out = tmp_path / "weights.jsonl"
        write_weights(weights, out)
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert lines == [
            {"id": "a", "weight": 0.4},
            {"id": "b", "weight": 0.0},
        ]

    def test_malformed_losses_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id":"a","base_loss":3.0}\n')
        with pytest.raises(SwftError) as err:
            load_loss_records(path)
        assert "line 1" in str(err.value)

    def test_weighted_dataset_roundtrip(self, tmp_path):
        samples = [
            {"id": "a", "source": "cityqa", "messages": [], "meta": {}},
            {"id": "b", "source": "cityqa", "messages": [], "meta": {}},
        ]
        weights = [SampleWeight("a", 0.25), SampleWeight("b", 0.0)]
        path = tmp_path / "weighted.jsonl"
        export_weighted_dataset(samples, weights, path)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert len(lines) == 2
        assert [l["weight"] for l in lines] == [0.25, 0.0]
        assert [l["id"] for l in lines] == ["a", "b"]

    def test_weighted_dataset_missing_weight(self, tmp_path):
        with pytest.raises(SwftError):
            export_weighted_dataset(
                [{"id": "a"}], [SampleWeight("b", 1.0)], tmp_path / "w.jsonl"
            )

    def test_all_zero_weight_export(self, tmp_path):
        samples = [{"id": f"s{i}"} for i in range(5)]
        weights = [SampleWeight(f"s{i}", 0.0) for i in range(5)]
        path = tmp_path / "zero.jsonl"
        export_weighted_dataset(samples, weights, path)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert all(l["weight"] == 0.0 for l in lines)
        assert len(lines) == 5
