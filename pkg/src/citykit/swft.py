"""Self-weighted fine-tuning: per-sample weights from paired losses.

Given each sample's cross-entropy under a base model and under a warm-up
fine-tuned model, the weight is

    w_i = |warm_i - base_i| / ||base||_2

with the L2 norm taken over the full base-loss vector. Samples whose loss
did not move get weight 0; the weighted training loss is the weight-scaled
sum of per-token losses averaged over samples. This module only consumes
loss files; it never runs a model.

Wire formats:
    losses JSONL   {"id","base_loss","warm_loss"}
    weights JSONL  {"id","weight"}
    weighted dataset = instruction JSONL + "weight" field per line
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class SwftError(Exception):
    pass


@dataclass(frozen=True)
class LossRecord:
    sample_id: str
    base_loss: float
    warm_loss: float

    def __post_init__(self):
        for name, v in (("base_loss", self.base_loss), ("warm_loss", self.warm_loss)):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class SampleWeight:
    sample_id: str
    weight: float


@dataclass(frozen=True)
class TokenLoss:
    sample_id: str
    token_losses: tuple[float, ...]  # negated log-probs, one per target token

    def __post_init__(self):
        if len(self.token_losses) < 1:
            raise ValueError("need at least one token loss")
        if any(not math.isfinite(v) or v < 0 for v in self.token_losses):
            raise ValueError("token losses must be finite and >= 0")


def compute_weights(records: Sequence[LossRecord]) -> list[SampleWeight]:
    """w_i = |warm_i - base_i| / ||base||_2, in input order."""
    if not records:
        raise SwftError("need at least one loss record")
    base = np.array([r.base_loss for r in records], dtype=float)
    warm = np.array([r.warm_loss for r in records], dtype=float)
    denom = float(np.linalg.norm(base))
    if denom == 0.0:
        raise SwftError("all base losses are zero; weight denominator undefined")
    return [
        SampleWeight(r.sample_id, float(abs(w - b) / denom))
        for r, b, w in zip(records, base, warm)
    ]


def weighted_loss(
    token_losses: Sequence[TokenLoss], weights: Sequence[SampleWeight]
) -> float:
    """(1/N) * sum_i w_i * sum_t tokenloss_{i,t}; non-negative by convention."""
    if not token_losses:
        raise SwftError("need at least one sample")
    by_id = {w.sample_id: w.weight for w in weights}
    missing = [t.sample_id for t in token_losses if t.sample_id not in by_id]
    if missing:
        raise SwftError(f"weights missing for sample ids: {missing[:5]}")
    total = 0.0
    for t in token_losses:
        total += by_id[t.sample_id] * sum(t.token_losses)
    return total / len(token_losses)


def flag_anomalies(
    records: Sequence[LossRecord], ratio_quantile: float = 0.9
) -> list[str]:
    """Sample ids with unusually high base loss and sub-average loss reduction.

    Flags records whose base loss lies strictly above the ratio_quantile of
    all base losses while their relative reduction (base - warm) / base falls
    strictly below the dataset-mean reduction ratio.
    """
    if len(records) < 10:
        raise SwftError(f"need at least 10 records, got {len(records)}")
    base = np.array([r.base_loss for r in records], dtype=float)
    warm = np.array([r.warm_loss for r in records], dtype=float)
    ratios = np.divide(
        base - warm, base, out=np.zeros_like(base), where=base > 0
    )
    cutoff = float(np.quantile(base, ratio_quantile))
    mean_ratio = float(ratios.mean())
    return [
        r.sample_id
        for r, b, ratio in zip(records, base, ratios)
        if b > cutoff and ratio < mean_ratio
    ]


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------

def load_loss_records(path: str | Path) -> list[LossRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            try:
                out.append(
                    LossRecord(
                        sample_id=rec["id"],
                        base_loss=float(rec["base_loss"]),
                        warm_loss=float(rec["warm_loss"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as e:
                raise SwftError(f"losses line {line_no}: {e}") from None
    return out


def write_weights(weights: Sequence[SampleWeight], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w in weights:
            fh.write(
                json.dumps({"id": w.sample_id, "weight": w.weight}) + "\n"
            )


def export_weighted_dataset(
    samples: Sequence[dict], weights: Sequence[SampleWeight], path: str | Path
) -> None:
    """Re-emit instruction records with a "weight" field, order preserved.

    samples are parsed dataset records (dicts with at least an "id").
    """
    by_id = {w.sample_id: w.weight for w in weights}
    missing = [s["id"] for s in samples if s["id"] not in by_id]
    if missing:
        raise SwftError(f"weights missing for dataset ids: {missing[:5]}")
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            record = dict(s)
            record["weight"] = by_id[s["id"]]
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
