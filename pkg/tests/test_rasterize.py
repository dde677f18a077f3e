import numpy as np
import pytest

from sketchadapt.rasterize import (ACTIVE_KERNEL, RasterSketch, render_raster)
from sketchadapt.strokes import VectorSketch


def test_blank_canvas_without_pen_down(hline_sketch):
    rows = np.array([[0.2, 0.2, 0, 1, 0], [0.8, 0.8, 0, 0, 1]], dtype=np.float32)
    raster = render_raster(VectorSketch(rows), side=64)
    assert raster.ink_pixel_count() == 0
    assert raster.pixels.max() == raster.pixels.min() == 1.0


def test_horizontal_line_ink_budget(hline_sketch):
    side, width = 224, 2.0
    raster = render_raster(hline_sketch, side=side, stroke_width=width)
    expected = 0.8 * side * width
    assert expected * 0.8 <= raster.ink_pixel_count() <= expected * 1.2


def test_render_deterministic(square_sketch):
    a = render_raster(square_sketch, side=96)
    b = render_raster(square_sketch, side=96)
    assert np.array_equal(a.pixels, b.pixels)


def test_side_floor_enforced(square_sketch):
    with pytest.raises(ValueError):
        render_raster(square_sketch, side=16)


def test_any_pen_down_segment_leaves_ink(square_sketch):
    raster = render_raster(square_sketch, side=64)
    assert raster.ink_pixel_count() > 0


def test_uint8_round_trip_lossless(square_sketch):
    raster = render_raster(square_sketch, side=64)
    again = RasterSketch.from_uint8(raster.to_uint8())
    assert np.array_equal(raster.pixels, again.pixels)


@pytest.mark.skipif(ACTIVE_KERNEL != "compiled",
                    reason="compiled kernel not built")
def test_kernels_agree_bitwise(square_sketch, hline_sketch):
    for sketch in (square_sketch, hline_sketch):
        fast = render_raster(sketch, side=128, kernel="compiled")
        ref = render_raster(sketch, side=128, kernel="numpy")
        assert np.array_equal(fast.pixels, ref.pixels)


@pytest.mark.skipif(ACTIVE_KERNEL != "compiled",
                    reason="compiled kernel not built")
def test_kernels_agree_on_random_sketches():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n = rng.integers(2, 30)
        xy = rng.uniform(0, 1, size=(n, 2))
        pens = np.zeros((n, 3))
        pens[:-1, rng.integers(0, 2, size=n - 1)] = 0  # fill below
        for i in range(n - 1):
            pens[i, int(rng.integers(0, 2))] = 1.0
        pens[-1] = [0, 0, 1]
        sketch = VectorSketch(np.concatenate([xy, pens], axis=1).astype(np.float32))
        fast = render_raster(sketch, side=96, kernel="compiled")
        ref = render_raster(sketch, side=96, kernel="numpy")
        assert np.array_equal(fast.pixels, ref.pixels)
