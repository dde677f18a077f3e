"""Benchmark: compiled rasterization kernel vs the numpy fallback.

Usage:
    python3 benchmarks/bench_rasterize.py [--side 224] [--sketches 200]

Renders a batch of synthetic sketches with both kernels, checks the
outputs agree bit-for-bit, and reports wall times and the speedup.
"""

import argparse
import time

import numpy as np

from sketchadapt import rasterize
from sketchadapt.rasterize import render_raster
from sketchadapt.synthetic import DEFAULT_CATEGORIES, make_vector


def build_sketches(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    sketches = []
    for i in range(n):
        category = DEFAULT_CATEGORIES[i % len(DEFAULT_CATEGORIES)]
        sketches.append(make_vector(category, rng.uniform(0, 1), rng))
    return sketches


def run(kernel: str, sketches, side: int, width: float) -> tuple[float, list]:
    start = time.perf_counter()
    rasters = [render_raster(s, side=side, stroke_width=width, kernel=kernel)
               for s in sketches]
    return time.perf_counter() - start, rasters


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--side", type=int, default=224)
    parser.add_argument("--sketches", type=int, default=200)
    parser.add_argument("--stroke-width", type=float, default=2.0)
    args = parser.parse_args()

    if rasterize.ACTIVE_KERNEL != "compiled":
        print("compiled kernel not built; run `pip install -e .` with Cython "
              "and a C compiler available. Benchmarking numpy only.")
        sketches = build_sketches(args.sketches)
        seconds, _ = run("numpy", sketches, args.side, args.stroke_width)
        print(f"numpy   : {seconds:.3f}s "
              f"({1000 * seconds / len(sketches):.2f} ms/sketch)")
        return 0

    sketches = build_sketches(args.sketches)
    # warm-up, then timed passes
    run("compiled", sketches[:5], args.side, args.stroke_width)
    run("numpy", sketches[:5], args.side, args.stroke_width)

    t_fast, fast = run("compiled", sketches, args.side, args.stroke_width)
    t_ref, ref = run("numpy", sketches, args.side, args.stroke_width)

    mismatches = sum(not np.array_equal(a.pixels, b.pixels)
                     for a, b in zip(fast, ref))
    print(f"side={args.side}, sketches={len(sketches)}, "
          f"stroke_width={args.stroke_width}")
    print(f"compiled: {t_fast:.3f}s ({1000 * t_fast / len(sketches):.2f} ms/sketch)")
    print(f"numpy   : {t_ref:.3f}s ({1000 * t_ref / len(sketches):.2f} ms/sketch)")
    print(f"speedup : {t_ref / t_fast:.2f}x")
    print(f"bit-identical outputs: {len(sketches) - mismatches}/{len(sketches)}")
    return 1 if mismatches else 0


if __name__ == "__main__":
    raise SystemExit(main())
