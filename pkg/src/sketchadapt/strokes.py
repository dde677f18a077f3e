"""Vector sketch representation and stroke-format conversions.

A vector sketch is an ordered sequence of points ``(x, y, q1, q2, q3)``:
absolute coordinates in [0, 1] plus a one-hot pen state. ``q1`` means a
segment connects this point to the next one, ``q2`` means the pen travels
to the next point lifted, and ``q3`` marks the final point of the sketch.

Two on-disk formats are understood:

* ``stroke3-delta``: rows ``(dx, dy, lift)`` of pen displacements, where
  ``lift = 1`` means the pen leaves the paper after this point.
* ``stroke5-absolute``: rows ``(x, y, q1, q2, q3)`` as stored here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .common import SketchFormatError

PEN_DOWN, PEN_UP, PEN_END = 0, 1, 2  # columns 2..4 of a stroke-5 row


@dataclass(frozen=True)
class VectorSketch:
    """Ordered stroke-5 point sequence with absolute [0, 1] coordinates."""

    points: np.ndarray  # (n_points, 5) float32

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        object.__setattr__(self, "points", pts)
        validate_stroke5(pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def pen_down_segments(self) -> np.ndarray:
        """(m, 4) array of drawn segments (x0, y0, x1, y1)."""
        pts = self.points
        down = pts[:-1, 2 + PEN_DOWN] == 1.0
        starts = pts[:-1, :2][down]
        ends = pts[1:, :2][down]
        return np.concatenate([starts, ends], axis=1)

    def to_jsonable(self) -> list[list[float]]:
        return [[float(v) for v in row] for row in self.points]

    @classmethod
    def from_rows(cls, rows) -> "VectorSketch":
        return cls(np.asarray(rows, dtype=np.float32))


def validate_stroke5(pts: np.ndarray) -> None:
    """Raise SketchFormatError unless ``pts`` satisfies every invariant."""
    if pts.ndim != 2 or pts.shape[1] != 5:
        raise SketchFormatError(f"expected (n, 5) point array, got {pts.shape}")
    if pts.shape[0] == 0:
        raise SketchFormatError("sketch has no points")
    coords = pts[:, :2]
    if not np.isfinite(pts).all():
        raise SketchFormatError("sketch contains non-finite values")
    if coords.min() < 0.0 or coords.max() > 1.0:
        raise SketchFormatError("coordinates outside [0, 1]")
    pens = pts[:, 2:]
    if not np.array_equal(pens, (pens == 1.0).astype(pens.dtype)) or \
            not np.array_equal(pens.sum(axis=1), np.ones(len(pts), dtype=pens.dtype)):
        raise SketchFormatError("pen states must be one-hot")
    end_rows = np.nonzero(pens[:, PEN_END] == 1.0)[0]
    if len(end_rows) != 1 or end_rows[0] != len(pts) - 1:
        raise SketchFormatError("exactly the final point must carry the end state")


def accumulate_deltas(deltas: np.ndarray) -> np.ndarray:
    """Running sum of (dx, dy) displacements, starting from the first row."""
    return np.cumsum(np.asarray(deltas, dtype=np.float64), axis=0)


def normalize_coordinates(xy: np.ndarray) -> np.ndarray:
    """Min-max normalize into [0, 1], preserving aspect ratio.

    The longer bounding-box side maps onto the full [0, 1] range and the
    shorter side is centered. A degenerate (single-point or zero-extent)
    sketch collapses to the canvas center.
    """
    xy = np.asarray(xy, dtype=np.float64)
    lo = xy.min(axis=0)
    span = xy.max(axis=0) - lo
    scale = span.max()
    if scale <= 0.0:
        return np.full_like(xy, 0.5)
    out = (xy - lo) / scale
    out += (1.0 - span / scale) / 2.0
    return out


def stroke3_to_stroke5(deltas, max_points: int | None = None) -> VectorSketch:
    """Convert stroke-3 delta rows to a normalized stroke-5 sketch.

    Displacements are accumulated to absolute coordinates, truncated to
    ``max_points`` at the last full stroke, normalized to [0, 1], and
    terminated: a single-point sketch collapses to one end-state point at
    the canvas center; otherwise one terminal point is appended at the last
    coordinate, so the output has (input point count + 1) rows.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.ndim != 2 or deltas.shape[1] != 3:
        raise SketchFormatError(f"expected (n, 3) stroke-3 rows, got {deltas.shape}")
    if deltas.shape[0] == 0:
        raise SketchFormatError("empty stroke record")
    lifts = deltas[:, 2]
    if not np.isin(lifts, (0.0, 1.0)).all():
        raise SketchFormatError("stroke-3 pen column must be 0 or 1")
    xy = accumulate_deltas(deltas[:, :2])
    return _finalize(xy, lifts, max_points)


def stroke5_rows_to_sketch(rows, max_points: int | None = None) -> VectorSketch:
    """Normalize raw stroke-5 rows (possibly unterminated) into a sketch."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != 5:
        raise SketchFormatError(f"expected (n, 5) stroke-5 rows, got {rows.shape}")
    if rows.shape[0] == 0:
        raise SketchFormatError("empty stroke record")
    pens = rows[:, 2:]
    if not np.isin(pens, (0.0, 1.0)).all() or not (pens.sum(axis=1) == 1.0).all():
        raise SketchFormatError("stroke-5 pen states must be one-hot")
    # Drop anything at or after the first end marker; _finalize re-terminates,
    # so a clean terminated input round-trips to the same number of rows.
    ends = np.nonzero(rows[:, 2 + PEN_END] == 1.0)[0]
    if len(ends) and ends[0] > 0:
        rows = rows[: ends[0]]
    elif len(ends):
        rows = rows[:1]  # lone end-state point: treat as a single-point sketch
    lifts = np.where(rows[:, 2 + PEN_DOWN] == 1.0, 0.0, 1.0)
    return _finalize(rows[:, :2], lifts, max_points)


def _finalize(xy: np.ndarray, lifts: np.ndarray, max_points: int | None) -> VectorSketch:
    if max_points is not None and len(xy) >= max_points:
        keep = _truncation_length(lifts, max_points - 1)
        xy, lifts = xy[:keep], lifts[:keep]
    xy = normalize_coordinates(xy)
    n = len(xy)
    if n == 1:
        rows = np.zeros((1, 5), dtype=np.float32)
        rows[0, :2] = xy[0]
        rows[0, 2 + PEN_END] = 1.0
        return VectorSketch(rows)
    rows = np.zeros((n + 1, 5), dtype=np.float32)
    rows[:n, :2] = xy
    rows[n, :2] = xy[-1]
    # Pen state of point i describes the travel toward point i+1.
    for i in range(n - 1):
        rows[i, 2 + (PEN_UP if lifts[i] == 1.0 else PEN_DOWN)] = 1.0
    rows[n - 1, 2 + PEN_UP] = 1.0  # last real point draws nothing further
    rows[n, 2 + PEN_END] = 1.0
    return VectorSketch(rows)


def _truncation_length(lifts: np.ndarray, cap: int) -> int:
    """Length to keep so the sketch ends on a completed stroke under ``cap``."""
    boundaries = np.nonzero(lifts[:cap] == 1.0)[0]
    if len(boundaries):
        return int(boundaries[-1]) + 1
    return cap


def sketch_to_stroke3(sketch: VectorSketch) -> np.ndarray:
    """Inverse convenience: stroke-3 delta rows from a stroke-5 sketch."""
    pts = sketch.points
    xy = pts[:, :2].astype(np.float64)
    deltas = np.diff(xy, axis=0, prepend=xy[:1])
    deltas[0] = xy[0]
    lifts = np.where(pts[:, 2 + PEN_DOWN] == 1.0, 0.0, 1.0)
    return np.concatenate([deltas, lifts[:, None]], axis=1)
