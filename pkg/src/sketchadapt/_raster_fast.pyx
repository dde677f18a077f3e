# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rasterization kernel.

Mirrors sketchadapt._raster_ref.draw_segments operation for operation so the
two kernels produce bit-equal coverage grids (the build disables FP
contraction for the same reason). Edit both together.
"""

from libc.math cimport ceil, floor, sqrt


def draw_segments(double[:, ::1] coverage, double[:, ::1] segments, double radius):
    cdef Py_ssize_t side_y = coverage.shape[0]
    cdef Py_ssize_t side_x = coverage.shape[1]
    cdef Py_ssize_t nseg = segments.shape[0]
    cdef Py_ssize_t m, row, col, lo_x, hi_x, lo_y, hi_y
    cdef double ax, ay, bx, by, ux, uy, length_sq, reach
    cdef double px, py, t, dx, dy, cov

    reach = radius + 1.0
    for m in range(nseg):
        ax = segments[m, 0]
        ay = segments[m, 1]
        bx = segments[m, 2]
        by = segments[m, 3]

        lo_x = <Py_ssize_t>floor((ax if ax < bx else bx) - reach)
        hi_x = <Py_ssize_t>ceil((ax if ax > bx else bx) + reach)
        lo_y = <Py_ssize_t>floor((ay if ay < by else by) - reach)
        hi_y = <Py_ssize_t>ceil((ay if ay > by else by) + reach)
        if lo_x < 0:
            lo_x = 0
        if hi_x > side_x - 1:
            hi_x = side_x - 1
        if lo_y < 0:
            lo_y = 0
        if hi_y > side_y - 1:
            hi_y = side_y - 1
        if lo_x > hi_x or lo_y > hi_y:
            continue

        ux = bx - ax
        uy = by - ay
        length_sq = ux * ux + uy * uy
        for row in range(lo_y, hi_y + 1):
            py = <double>row
            for col in range(lo_x, hi_x + 1):
                px = <double>col
                if length_sq > 0.0:
                    t = ((px - ax) * ux + (py - ay) * uy) / length_sq
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                dx = px - (ax + t * ux)
                dy = py - (ay + t * uy)
                cov = radius + 0.5 - sqrt(dx * dx + dy * dy)
                if cov <= 0.0:
                    continue
                if cov > 1.0:
                    cov = 1.0
                if cov > coverage[row, col]:
                    coverage[row, col] = cov
