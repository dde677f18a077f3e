"""Dataset ingestion, edge-map filtering, split construction, manifest I/O.

Inputs come in two shapes: newline-delimited JSON stroke records (one
record per line, ``{"category": ..., "strokes": [[dx..],[dy..],[pen..]]}``
for stroke-3 deltas or ``{"category": ..., "points": [[x,y,q1,q2,q3]..]}``
for absolute stroke-5) and directories of edge-map images laid out as
``<dir>/<category>/<image>``. Every ingested sample carries a rendered
raster; stroke sources also carry the vector form, edge-maps do not.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image

from .common import AbstractionLevel, SketchFormatError, SplitError
from .rasterize import DEFAULT_SIDE, DEFAULT_STROKE_WIDTH, RasterSketch, render_raster
from .strokes import VectorSketch, stroke3_to_stroke5, stroke5_rows_to_sketch

logger = logging.getLogger(__name__)

DEFAULT_MAX_POINTS = 196

STROKE_FORMATS = ("stroke3-delta", "stroke5-absolute")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class LabeledSample:
    """One training/eval unit: raster, optional vector, labels, identity."""

    raster: RasterSketch
    vector: VectorSketch | None
    category_index: int
    category: str
    abstraction_label: AbstractionLevel
    source_id: str


@dataclass
class RecordError:
    index: int
    reason: str


@dataclass
class IngestResult:
    samples: list[LabeledSample]
    record_errors: list[RecordError] = field(default_factory=list)
    unknown_category_count: int = 0


def ingest_stroke_dataset(
    path: str | Path,
    format: str,
    category_list: Sequence[str],
    abstraction_label: AbstractionLevel,
    *,
    side: int = DEFAULT_SIDE,
    stroke_width: float = DEFAULT_STROKE_WIDTH,
    max_points: int = DEFAULT_MAX_POINTS,
) -> IngestResult:
    """Read an NDJSON stroke file into labeled samples.

    Malformed records are reported per line (never fatal); records whose
    category is not in ``category_list`` are rejected and counted. Output
    order follows input order, so the result is deterministic.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"stroke dataset not found: {path}")
    if format not in STROKE_FORMATS:
        raise ValueError(f"unknown stroke format {format!r}; expected one of {STROKE_FORMATS}")
    category_index = {name: i for i, name in enumerate(category_list)}
    prefix = abstraction_label.name.lower()

    result = IngestResult(samples=[])
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                category = record["category"]
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                result.record_errors.append(RecordError(line_no, f"malformed record: {exc}"))
                continue
            if category not in category_index:
                result.unknown_category_count += 1
                continue
            try:
                vector = _parse_stroke_record(record, format, max_points)
            except (SketchFormatError, KeyError, ValueError, TypeError) as exc:
                result.record_errors.append(RecordError(line_no, str(exc)))
                continue
            raster = render_raster(vector, side=side, stroke_width=stroke_width)
            result.samples.append(LabeledSample(
                raster=raster,
                vector=vector,
                category_index=category_index[category],
                category=category,
                abstraction_label=abstraction_label,
                source_id=f"{prefix}-{category}-{line_no:06d}",
            ))
    return result


def _parse_stroke_record(record: dict, format: str, max_points: int) -> VectorSketch:
    if format == "stroke3-delta":
        strokes = record["strokes"]
        if len(strokes) != 3:
            raise SketchFormatError("expected three parallel arrays [dx, dy, pen]")
        rows = np.asarray(strokes, dtype=np.float64).T
        return stroke3_to_stroke5(rows, max_points=max_points)
    rows = np.asarray(record["points"], dtype=np.float64)
    return stroke5_rows_to_sketch(rows, max_points=max_points)


def ingest_edgemap_dir(
    root: str | Path,
    category_list: Sequence[str],
    *,
    side: int = DEFAULT_SIDE,
) -> IngestResult:
    """Load pre-generated edge-map images from per-category directories.

    Edge-map samples have no stroke-order data, so ``vector`` is None and
    the abstraction label is LOW. Images are resized to ``side`` and
    converted to a 3-channel [0, 1] grid.
    """
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(f"edge-map directory not found: {root}")
    category_index = {name: i for i, name in enumerate(category_list)}
    result = IngestResult(samples=[])
    for category_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        category = category_dir.name
        if category not in category_index:
            result.unknown_category_count += 1
            continue
        for image_path in sorted(category_dir.iterdir()):
            if image_path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            raster = load_raster_image(image_path, side)
            result.samples.append(LabeledSample(
                raster=raster,
                vector=None,
                category_index=category_index[category],
                category=category,
                abstraction_label=AbstractionLevel.LOW,
                source_id=f"low-{category}-{image_path.stem}",
            ))
    return result


def load_raster_image(path: str | Path, side: int) -> RasterSketch:
    with Image.open(path) as img:
        img = img.convert("L")
        if img.size != (side, side):
            img = img.resize((side, side), Image.BILINEAR)
        gray = np.asarray(img, dtype=np.uint8)
    return RasterSketch.from_uint8(gray)


def filter_edgemaps(
    samples: Sequence[LabeledSample],
    category_names: Sequence[str],
    scorer: Callable[[RasterSketch, Sequence[str]], np.ndarray],
    keep_fraction: float,
) -> list[LabeledSample]:
    """Keep the most recognizable fraction of edge-maps, per category.

    ``scorer(raster, category_names)`` returns a probability over the
    categories; images are ranked by the probability of their own category
    (descending), ties broken by source_id in lexicographic order. Each
    category keeps ``max(1, floor(n * keep_fraction))`` images; an empty
    category bucket is dropped with a warning.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    category_names = list(category_names)
    name_index = {name: i for i, name in enumerate(category_names)}
    buckets: dict[str, list[LabeledSample]] = {name: [] for name in category_names}
    for sample in samples:
        if sample.category in buckets:
            buckets[sample.category].append(sample)

    kept_ids: set[str] = set()
    for name in category_names:
        bucket = buckets[name]
        if not bucket:
            logger.warning("edge-map category %r has no images; dropped", name)
            continue
        if keep_fraction == 1.0:
            kept_ids.update(s.source_id for s in bucket)
            continue
        own = {s.source_id: float(scorer(s.raster, category_names)[name_index[name]])
               for s in bucket}
        ranked = sorted(bucket, key=lambda s: (-own[s.source_id], s.source_id))
        kept_ids.update(s.source_id for s in ranked[: max(1, math.floor(len(bucket) * keep_fraction))])

    # Preserve input order; samples outside the named categories pass through.
    return [s for s in samples if s.category not in buckets or s.source_id in kept_ids]


@dataclass
class DatasetSplit:
    """Few-shot train/eval partition over seen and unseen categories."""

    seen_categories: list[str]
    unseen_categories: list[str]
    shots_per_class: int
    train_samples: list[str]
    eval_seen_samples: list[str]
    eval_unseen_samples: list[str]
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "seen_categories": self.seen_categories,
            "unseen_categories": self.unseen_categories,
            "shots_per_class": self.shots_per_class,
            "train_samples": self.train_samples,
            "eval_seen_samples": self.eval_seen_samples,
            "eval_unseen_samples": self.eval_unseen_samples,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "DatasetSplit":
        return cls(**payload)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetSplit":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_split(
    samples: Sequence[LabeledSample],
    seen: Sequence[str],
    unseen: Sequence[str],
    shots: int,
    seed: int,
) -> DatasetSplit:
    """Draw a reproducible few-shot split.

    For every seen category and every abstraction source present in the
    collection, exactly ``shots`` samples go to training; everything else
    from seen categories becomes the seen eval set, and all samples of
    unseen categories the unseen eval set.
    """
    seen = list(seen)
    unseen = list(unseen)
    overlap = set(seen) & set(unseen)
    if overlap:
        raise SplitError(f"seen and unseen categories overlap: {sorted(overlap)}")
    if shots < 1:
        raise SplitError("shots must be a positive integer")

    sources = sorted({s.abstraction_label for s in samples}, key=lambda a: a.value)
    by_bucket: dict[tuple[str, AbstractionLevel], list[str]] = {}
    by_category: dict[str, list[str]] = {}
    for sample in samples:
        by_bucket.setdefault((sample.category, sample.abstraction_label), []).append(sample.source_id)
        by_category.setdefault(sample.category, []).append(sample.source_id)

    rng = np.random.default_rng(seed)
    train: list[str] = []
    for category in seen:
        for source in sources:
            ids = sorted(by_bucket.get((category, source), []))
            if len(ids) < shots:
                raise SplitError(
                    f"category {category!r}, source {source.name}: "
                    f"have {len(ids)} samples, need {shots}")
            picked = rng.permutation(len(ids))[:shots]
            train.extend(ids[i] for i in sorted(picked))

    train_set = set(train)
    eval_seen = sorted(i for c in seen for i in by_category.get(c, []) if i not in train_set)
    eval_unseen = sorted(i for c in unseen for i in by_category.get(c, []))
    return DatasetSplit(
        seen_categories=seen,
        unseen_categories=unseen,
        shots_per_class=shots,
        train_samples=train,
        eval_seen_samples=eval_seen,
        eval_unseen_samples=eval_unseen,
        seed=seed,
    )


def write_manifest(samples: Sequence[LabeledSample], out_dir: str | Path) -> Path:
    """Persist samples (rasters as PNG, vectors as JSON) plus an index file."""
    out_dir = Path(out_dir)
    rasters = out_dir / "rasters"
    vectors = out_dir / "vectors"
    rasters.mkdir(parents=True, exist_ok=True)
    vectors.mkdir(parents=True, exist_ok=True)

    entries = []
    categories = sorted({s.category for s in samples})
    for sample in samples:
        stem = sample.source_id.replace("/", "_")
        raster_rel = f"rasters/{stem}.png"
        Image.fromarray(sample.raster.to_uint8()).save(out_dir / raster_rel)
        entry = {
            "id": sample.source_id,
            "category": sample.category,
            "abstraction": sample.abstraction_label.name,
            "raster": raster_rel,
        }
        if sample.vector is not None:
            vector_rel = f"vectors/{stem}.json"
            (out_dir / vector_rel).write_text(json.dumps(sample.vector.to_jsonable()))
            entry["vector"] = vector_rel
        entries.append(entry)

    manifest = {
        "version": 1,
        "categories": categories,
        "samples": entries,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path: str | Path) -> list[LabeledSample]:
    """Reload samples exactly as written by ``write_manifest``."""
    path = Path(path)
    payload = json.loads(path.read_text())
    if payload.get("version") != 1:
        raise SketchFormatError(f"unsupported manifest version in {path}")
    root = path.parent
    categories = payload["categories"]
    index = {name: i for i, name in enumerate(categories)}
    samples = []
    for entry in payload["samples"]:
        with Image.open(root / entry["raster"]) as img:
            raster = RasterSketch.from_uint8(np.asarray(img.convert("L"), dtype=np.uint8))
        vector = None
        if "vector" in entry:
            rows = json.loads((root / entry["vector"]).read_text())
            vector = VectorSketch.from_rows(rows)
        samples.append(LabeledSample(
            raster=raster,
            vector=vector,
            category_index=index[entry["category"]],
            category=entry["category"],
            abstraction_label=AbstractionLevel.from_name(entry["abstraction"]),
            source_id=entry["id"],
        ))
    return samples


def source_counts(samples: Sequence[LabeledSample]) -> dict[str, int]:
    counts = {level.name: 0 for level in AbstractionLevel}
    for sample in samples:
        counts[sample.abstraction_label.name] += 1
    return counts
