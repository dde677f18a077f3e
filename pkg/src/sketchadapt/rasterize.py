"""Raster sketch representation and stroke rendering.

Rendering draws the pen-down segments of a vector sketch as anti-aliased
black lines on a white square canvas. The hot per-pixel loop lives in a
compiled kernel when available (``_raster_fast``, built from Cython) with a
numpy fallback selected at import time; ``benchmarks/bench_rasterize.py``
compares the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _raster_ref
from .strokes import VectorSketch

try:
    from . import _raster_fast
except ImportError:  # extension not built; numpy kernel only
    _raster_fast = None

ACTIVE_KERNEL = "compiled" if _raster_fast is not None else "numpy"

_KERNELS = {"numpy": _raster_ref.draw_segments}
if _raster_fast is not None:
    _KERNELS["compiled"] = _raster_fast.draw_segments

MIN_SIDE = 32
DEFAULT_SIDE = 224
DEFAULT_STROKE_WIDTH = 2.0


@dataclass(frozen=True)
class RasterSketch:
    """3-channel square pixel grid, values in [0, 1] (1 = white paper)."""

    pixels: np.ndarray  # (3, side, side) float32

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[0] != 3 or px.shape[1] != px.shape[2]:
            raise ValueError(f"expected (3, side, side) pixels, got {px.shape}")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def side(self) -> int:
        return self.pixels.shape[1]

    def ink_pixel_count(self) -> int:
        """Number of pixels touched by any amount of ink."""
        return int((self.pixels[0] < 1.0).sum())

    def to_uint8(self) -> np.ndarray:
        """(side, side, 3) uint8 image, lossless against the float grid."""
        return np.rint(self.pixels * 255.0).astype(np.uint8).transpose(1, 2, 0)

    @classmethod
    def from_uint8(cls, image: np.ndarray) -> "RasterSketch":
        if image.ndim == 2:
            image = np.repeat(image[:, :, None], 3, axis=2)
        px = (image.astype(np.float32) / 255.0).transpose(2, 0, 1)
        return cls(px)


def render_raster(
    sketch: VectorSketch,
    side: int = DEFAULT_SIDE,
    stroke_width: float = DEFAULT_STROKE_WIDTH,
    kernel: str | None = None,
) -> RasterSketch:
    """Render a vector sketch to a white-background, black-stroke raster.

    ``kernel`` forces a specific implementation ("numpy" or "compiled");
    by default the compiled one is used when it was built. Coordinates map
    as ``pixel = coordinate * (side - 1)``. Output is deterministic, and a
    float canvas is quantized to the uint8 grid so PNG round-trips are
    lossless.
    """
    if side < MIN_SIDE:
        raise ValueError(f"side must be >= {MIN_SIDE}, got {side}")
    if stroke_width <= 0.0:
        raise ValueError("stroke_width must be positive")
    draw = _KERNELS[kernel or ACTIVE_KERNEL]

    coverage = np.zeros((side, side), dtype=np.float64)
    segments = sketch.pen_down_segments().astype(np.float64)
    if len(segments):
        segments = np.ascontiguousarray(segments * (side - 1))
        draw(coverage, segments, stroke_width / 2.0)

    gray = np.rint((1.0 - coverage) * 255.0).astype(np.float32) / 255.0
    return RasterSketch(np.repeat(gray[None, :, :], 3, axis=0))
