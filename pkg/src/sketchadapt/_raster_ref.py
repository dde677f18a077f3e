"""Pure numpy rasterization kernel (fallback for the compiled extension).

Coverage model: for every pixel center within reach of a segment, coverage
is ``clip(radius + 0.5 - distance_to_segment, 0, 1)`` and overlapping
segments combine by maximum. The compiled kernel in ``_raster_fast.pyx``
implements the identical arithmetic in the identical order so both produce
bit-equal canvases; keep the two in sync.
"""

from __future__ import annotations

import numpy as np


def draw_segments(coverage: np.ndarray, segments: np.ndarray, radius: float) -> None:
    """Accumulate anti-aliased segment coverage into ``coverage`` in place.

    coverage: (side, side) float64, row index = y, column index = x.
    segments: (m, 4) float64 rows (x0, y0, x1, y1) in pixel coordinates.
    """
    side_y, side_x = coverage.shape
    reach = radius + 1.0
    for ax, ay, bx, by in segments:
        lo_x = max(int(np.floor(min(ax, bx) - reach)), 0)
        hi_x = min(int(np.ceil(max(ax, bx) + reach)), side_x - 1)
        lo_y = max(int(np.floor(min(ay, by) - reach)), 0)
        hi_y = min(int(np.ceil(max(ay, by) + reach)), side_y - 1)
        if lo_x > hi_x or lo_y > hi_y:
            continue
        px = np.arange(lo_x, hi_x + 1, dtype=np.float64)[None, :]
        py = np.arange(lo_y, hi_y + 1, dtype=np.float64)[:, None]
        ux = bx - ax
        uy = by - ay
        length_sq = ux * ux + uy * uy
        if length_sq > 0.0:
            t = ((px - ax) * ux + (py - ay) * uy) / length_sq
            t = np.clip(t, 0.0, 1.0)
        else:
            t = np.zeros((hi_y - lo_y + 1, hi_x - lo_x + 1), dtype=np.float64)
        dx = px - (ax + t * ux)
        dy = py - (ay + t * uy)
        cov = np.clip(radius + 0.5 - np.sqrt(dx * dx + dy * dy), 0.0, 1.0)
        window = coverage[lo_y:hi_y + 1, lo_x:hi_x + 1]
        np.maximum(window, cov, out=window)
