"""Procedural sketch generator for tests, demos, and the desk-scale benchmark.

Each category is a parametric shape drawn at a continuous "abstraction"
level in [0, 1]: low levels produce dense, detailed drawings (outline plus
hatching, like an edge map), high levels sparse jittery doodles. The three
abstraction sources sample that level from either cleanly separated or
overlapping ranges, which is what the codebook/mixup machinery is about.
"""

from __future__ import annotations

import argparse
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .common import AbstractionLevel
from .datasets import LabeledSample
from .rasterize import render_raster
from .strokes import VectorSketch, stroke3_to_stroke5

DEFAULT_CATEGORIES = ("circle", "square", "triangle", "star", "zigzag", "cross")

# (low, high) sampling ranges for the per-sample abstraction level
SEPARABLE_RANGES = {
    AbstractionLevel.LOW: (0.00, 0.10),
    AbstractionLevel.MEDIUM: (0.45, 0.55),
    AbstractionLevel.HIGH: (0.90, 1.00),
}
OVERLAP_RANGES = {
    AbstractionLevel.LOW: (0.00, 0.45),
    AbstractionLevel.MEDIUM: (0.25, 0.75),
    AbstractionLevel.HIGH: (0.55, 1.00),
}


def _ring(t: np.ndarray) -> np.ndarray:
    angle = 2 * math.pi * t
    return np.stack([0.5 + 0.38 * np.cos(angle), 0.5 + 0.38 * np.sin(angle)], axis=1)


def _polygon(corners: np.ndarray, t: np.ndarray) -> np.ndarray:
    closed = np.vstack([corners, corners[:1]])
    lengths = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    pos = t * cum[-1]
    out = np.empty((len(t), 2))
    for i, p in enumerate(pos):
        seg = min(np.searchsorted(cum, p, side="right") - 1, len(lengths) - 1)
        frac = (p - cum[seg]) / lengths[seg]
        out[i] = closed[seg] * (1 - frac) + closed[seg + 1] * frac
    return out


_SQUARE = np.array([[0.15, 0.15], [0.85, 0.15], [0.85, 0.85], [0.15, 0.85]])
_TRIANGLE = np.array([[0.5, 0.12], [0.88, 0.85], [0.12, 0.85]])
_STAR = np.array([
    [0.5 + (0.40 if i % 2 == 0 else 0.17) * math.sin(i * math.pi / 5),
     0.5 - (0.40 if i % 2 == 0 else 0.17) * math.cos(i * math.pi / 5)]
    for i in range(10)])


def _zigzag(t: np.ndarray) -> np.ndarray:
    x = 0.1 + 0.8 * t
    y = 0.5 + 0.3 * (2 * np.abs(((4 * t) % 1.0) - 0.5) - 0.5)
    return np.stack([x, y], axis=1)


def _shape_strokes(category: str, t: np.ndarray) -> list[np.ndarray]:
    if category == "circle":
        return [_ring(t)]
    if category == "square":
        return [_polygon(_SQUARE, t)]
    if category == "triangle":
        return [_polygon(_TRIANGLE, t)]
    if category == "star":
        return [_polygon(_STAR, t)]
    if category == "zigzag":
        return [_zigzag(t)]
    if category == "cross":
        half = max(2, len(t) // 2)
        s = np.linspace(0.0, 1.0, half)
        a = np.stack([0.15 + 0.7 * s, 0.15 + 0.7 * s], axis=1)
        b = np.stack([0.15 + 0.7 * s, 0.85 - 0.7 * s], axis=1)
        return [a, b]
    raise ValueError(f"unknown synthetic category {category!r}")


DOODLE_THRESHOLD = 0.55

_MOTIF_CYCLE = {c: DEFAULT_CATEGORIES[(i + 1) % len(DEFAULT_CATEGORIES)]
                for i, c in enumerate(DEFAULT_CATEGORIES)}


def shape_points(category: str, level: float, rng: np.random.Generator) -> list[np.ndarray]:
    """Strokes (absolute [0,1]^2 paths) for a category at an abstraction level.

    Lower levels add hatching detail and background clutter; higher levels
    subsample, jitter, and trail off the outline, so ink density falls
    monotonically with the level. In the doodle regime the outline motif is
    swapped for the next category's: quick drawings of one thing look like
    careful drawings of another, and only the style cues reveal the level.
    That cross-level interference is what abstraction-aware classification
    has to untangle.
    """
    level = float(np.clip(level, 0.0, 1.0))
    motif = _MOTIF_CYCLE.get(category, category) if level >= DOODLE_THRESHOLD else category
    n = int(round(44 - 38 * level))
    # doodles trail off: above mid abstraction only part of the outline is drawn
    span = 1.0 - 0.5 * max(0.0, level - 0.5)
    t = np.linspace(0.0, span, max(n, 4))
    strokes = [s.copy() for s in _shape_strokes(motif, t)]
    if level < 0.25:  # inner echo outline, an edge-map-like trait
        strokes.extend(0.5 + (s - 0.5) * 0.82 for s in _shape_strokes(motif, t))
    jitter = 0.002 + 0.030 * level
    strokes = [s + rng.normal(0.0, jitter, size=s.shape) for s in strokes]
    # photo-derived edge maps carry background clutter; doodles do not
    clutter = max(0.0, 1.0 - 2.0 * level)
    if clutter > 0.0:
        frame = np.array([[0.03, 0.03], [0.97, 0.03], [0.97, 0.97],
                          [0.03, 0.97], [0.03, 0.03]])
        strokes.append(frame + rng.normal(0.0, 0.003, size=frame.shape))
        for k in range(int(round(5 * clutter))):
            y = 0.3 + 0.4 * (k + 1) / (5 * clutter + 1)
            xs = np.linspace(0.3 + 0.02 * k, 0.7 - 0.02 * k, 6)
            ys = np.full(6, y) + rng.normal(0.0, 0.004, size=6)
            strokes.append(np.stack([xs, ys], axis=1))
    return [np.clip(s, 0.0, 1.0) for s in strokes]


def strokes_to_stroke3(strokes: Sequence[np.ndarray], scale: float = 255.0) -> np.ndarray:
    """Absolute stroke paths -> stroke-3 delta rows (dx, dy, lift)."""
    points = []
    lifts = []
    for stroke in strokes:
        for row in stroke:
            points.append(row * scale)
            lifts.append(0.0)
        lifts[-1] = 1.0
    points = np.asarray(points)
    deltas = np.diff(points, axis=0, prepend=points[:1])
    deltas[0] = points[0]
    return np.concatenate([deltas, np.asarray(lifts)[:, None]], axis=1)


def make_vector(category: str, level: float, rng: np.random.Generator,
                max_points: int = 196) -> VectorSketch:
    strokes = shape_points(category, level, rng)
    return stroke3_to_stroke5(strokes_to_stroke3(strokes), max_points=max_points)


def make_samples(
    categories: Sequence[str],
    per_category: int,
    mode: str = "separable",
    seed: int = 0,
    side: int = 32,
    stroke_width: float = 2.0,
    max_points: int = 196,
    levels: Sequence[AbstractionLevel] = tuple(AbstractionLevel),
) -> list[LabeledSample]:
    """Full three-source dataset. LOW samples mimic edge maps (no vector)."""
    ranges = {"separable": SEPARABLE_RANGES, "overlap": OVERLAP_RANGES}[mode]
    rng = np.random.default_rng(seed)
    samples = []
    for level in levels:
        lo, hi = ranges[level]
        for ci, category in enumerate(categories):
            for j in range(per_category):
                a = rng.uniform(lo, hi)
                vector = make_vector(category, a, rng, max_points)
                raster = render_raster(vector, side=side, stroke_width=stroke_width)
                samples.append(LabeledSample(
                    raster=raster,
                    vector=None if level is AbstractionLevel.LOW else vector,
                    category_index=ci,
                    category=category,
                    abstraction_label=level,
                    source_id=f"{level.name.lower()}-{category}-{j:04d}",
                ))
    return samples


def make_band_samples(
    categories: Sequence[str],
    per_category: int,
    band: tuple[float, float] = (0.3, 0.7),
    seed: int = 0,
    side: int = 32,
    stroke_width: float = 2.0,
    max_points: int = 196,
) -> list[LabeledSample]:
    """Samples at intermediate abstraction levels none of the sources covers.

    Labels carry the nearest coarse level so abstraction accuracy is still
    measurable; the interesting metric on these is category accuracy.
    """
    rng = np.random.default_rng(seed)
    samples = []
    for ci, category in enumerate(categories):
        for j in range(per_category):
            a = rng.uniform(*band)
            nearest = min(AbstractionLevel,
                          key=lambda lvl: abs(a - (0.1, 0.5, 0.9)[lvl.value]))
            vector = make_vector(category, a, rng, max_points)
            raster = render_raster(vector, side=side, stroke_width=stroke_width)
            samples.append(LabeledSample(
                raster=raster,
                vector=vector,
                category_index=ci,
                category=category,
                abstraction_label=nearest,
                source_id=f"band-{category}-{j:04d}",
            ))
    return samples


def write_demo_tree(
    out_dir: str | Path,
    categories: Sequence[str] = DEFAULT_CATEGORIES,
    per_category: int = 14,
    seed: int = 0,
    side: int = 32,
    mode: str = "separable",
) -> dict[str, Path]:
    """Emit an on-disk demo dataset in the ingestion formats.

    Produces ``high.ndjson`` and ``medium.ndjson`` stroke files plus an
    ``edgemaps/<category>/`` image tree, mirroring how real sources arrive.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ranges = {"separable": SEPARABLE_RANGES, "overlap": OVERLAP_RANGES}[mode]
    rng = np.random.default_rng(seed)
    paths = {
        "high": out_dir / "high.ndjson",
        "medium": out_dir / "medium.ndjson",
        "edgemaps": out_dir / "edgemaps",
    }
    for level, key in ((AbstractionLevel.HIGH, "high"), (AbstractionLevel.MEDIUM, "medium")):
        lo, hi = ranges[level]
        with paths[key].open("w", encoding="utf-8") as fh:
            for category in categories:
                for _ in range(per_category):
                    strokes = shape_points(category, rng.uniform(lo, hi), rng)
                    rows = strokes_to_stroke3(strokes)
                    record = {"category": category,
                              "strokes": [list(map(float, rows[:, i])) for i in range(3)]}
                    fh.write(json.dumps(record) + "\n")
    lo, hi = ranges[AbstractionLevel.LOW]
    for category in categories:
        cat_dir = paths["edgemaps"] / category
        cat_dir.mkdir(parents=True, exist_ok=True)
        for j in range(per_category):
            vector = make_vector(category, rng.uniform(lo, hi), rng)
            raster = render_raster(vector, side=side)
            Image.fromarray(raster.to_uint8()).save(cat_dir / f"em_{j:04d}.png")
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="generate a synthetic demo dataset on disk")
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--per-category", type=int, default=14)
    parser.add_argument("--mode", choices=("separable", "overlap"), default="separable")
    parser.add_argument("--side", type=int, default=32)
    parser.add_argument("--categories", default=",".join(DEFAULT_CATEGORIES))
    args = parser.parse_args(argv)
    paths = write_demo_tree(args.out, args.categories.split(","), args.per_category,
                            args.seed, args.side, args.mode)
    for key, path in paths.items():
        print(f"{key}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
