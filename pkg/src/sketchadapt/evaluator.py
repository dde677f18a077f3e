"""Evaluation: top-1 accuracy, abstraction accuracy, and breakdown tables.

Samples are sorted by id before batching so the report is independent of
input order. Inference runs the same four steps as prediction: encode the
sketch, derive the conditional context and abstraction distribution, shift
the text prompts, classify against the category list.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from .common import AbstractionLevel
from .datasets import LabeledSample
from .model import ModelState, make_batch, predict

MEMBERSHIP_BINS = 10
SCORE_BINS = 10

# scalar abstraction score: expected position on the low->high axis
LEVEL_POSITIONS = (0.0, 0.5, 1.0)


@dataclass
class EvalReport:
    which: str
    n_samples: int
    top1: float                      # percent
    abstraction_accuracy: float      # percent
    per_category: dict[str, dict]    # name -> {accuracy, count}
    per_source: dict[str, dict]      # LOW/MEDIUM/HIGH -> {accuracy, count}
    membership_bins: list[int] = field(default_factory=list)
    score_curve: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "which": self.which,
            "n_samples": self.n_samples,
            "top1": self.top1,
            "abstraction_accuracy": self.abstraction_accuracy,
            "per_category": self.per_category,
            "per_source": self.per_source,
            "membership_bins": self.membership_bins,
            "score_curve": self.score_curve,
        }

    def save(self, out_dir: str | Path) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"report": out_dir / f"report_{self.which}.json"}
        paths["report"].write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        paths["per_category"] = out_dir / f"per_category_{self.which}.csv"
        with paths["per_category"].open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["category", "accuracy", "count"])
            for name in sorted(self.per_category):
                row = self.per_category[name]
                writer.writerow([name, f"{row['accuracy']:.4f}", row["count"]])
        paths["per_source"] = out_dir / f"per_source_{self.which}.csv"
        with paths["per_source"].open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["source", "accuracy", "count"])
            for name in (lvl.name for lvl in AbstractionLevel):
                if name in self.per_source:
                    row = self.per_source[name]
                    writer.writerow([name, f"{row['accuracy']:.4f}", row["count"]])
        return paths


def abstraction_report_rows(samples, distributions) -> list[dict]:
    """Per-sample abstraction CSV rows: id, three scores, true label."""
    rows = []
    for sample, dist in zip(samples, distributions):
        rows.append({
            "sample_id": sample.source_id,
            "a_low": float(dist[0]),
            "a_medium": float(dist[1]),
            "a_high": float(dist[2]),
            "label": sample.abstraction_label.name,
        })
    return rows


def write_abstraction_report(path: str | Path, rows: Sequence[dict]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["sample_id", "a_low", "a_medium",
                                                "a_high", "label"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def evaluate(model: ModelState, samples: Sequence[LabeledSample],
             category_names: Sequence[str], which: str = "seen",
             batch_size: int | None = None) -> EvalReport:
    if not samples:
        raise ValueError("no samples to evaluate")
    category_names = list(category_names)
    ordered = sorted(samples, key=lambda s: s.source_id)
    batch_size = batch_size or model.config.batch_size

    correct: list[bool] = []
    memberships: list[float] = []
    scores: list[float] = []
    abstraction_correct: list[bool] = []
    words = model.backbone.text.embeddings_for(category_names)
    with torch.no_grad():
        for start in range(0, len(ordered), batch_size):
            chunk = ordered[start:start + batch_size]
            batch = make_batch(chunk, model.backbone, category_names)
            probs, dist = predict(model, batch.images, words)
            top = probs.argmax(dim=1)
            for i, sample in enumerate(chunk):
                correct.append(category_names[int(top[i])] == sample.category)
                if dist is not None:
                    d = dist[i]
                    memberships.append(float(d[sample.abstraction_label.value]))
                    scores.append(float(sum(p * LEVEL_POSITIONS[j] for j, p in enumerate(d))))
                    abstraction_correct.append(int(d.argmax()) == sample.abstraction_label.value)

    per_category: dict[str, dict] = {}
    per_source: dict[str, dict] = {}
    for sample, hit in zip(ordered, correct):
        _tally(per_category, sample.category, hit)
        _tally(per_source, sample.abstraction_label.name, hit)
    for table in (per_category, per_source):
        for row in table.values():
            row["accuracy"] = 100.0 * row.pop("hits") / row["count"]

    membership_bins = [0] * MEMBERSHIP_BINS
    for value in memberships:
        membership_bins[min(int(value * MEMBERSHIP_BINS), MEMBERSHIP_BINS - 1)] += 1

    score_curve = []
    for b in range(SCORE_BINS):
        lo, hi = b / SCORE_BINS, (b + 1) / SCORE_BINS
        members = [correct[i] for i, s in enumerate(scores)
                   if lo <= s < hi or (b == SCORE_BINS - 1 and s == 1.0)]
        score_curve.append({
            "lo": lo,
            "hi": hi,
            "count": len(members),
            "accuracy": (100.0 * sum(members) / len(members)) if members else None,
        })

    abstraction_accuracy = (100.0 * sum(abstraction_correct) / len(abstraction_correct)
                            if abstraction_correct else 0.0)
    return EvalReport(
        which=which,
        n_samples=len(ordered),
        top1=100.0 * sum(correct) / len(correct),
        abstraction_accuracy=abstraction_accuracy,
        per_category=per_category,
        per_source=per_source,
        membership_bins=membership_bins,
        score_curve=score_curve,
    )


def _tally(table: dict, key: str, hit: bool) -> None:
    row = table.setdefault(key, {"hits": 0, "count": 0})
    row["hits"] += int(hit)
    row["count"] += 1
