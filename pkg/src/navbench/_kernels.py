"""Compiled inner loops for grid geometry.

Everything here works on plain float/int arrays so the same code runs under
numba or, if numba is unavailable, as ordinary Python.
"""

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def nearest_box(px, py, boxes, size):
    """Distance from (px, py) to the closest axis-aligned square in `boxes`.

    `boxes` holds lower-left corners, shape (n, 2). Returns (distance, qx, qy)
    where (qx, qy) is the closest point on that square.
    """
    best = np.inf
    bx = px
    by = py
    for i in range(boxes.shape[0]):
        x0 = boxes[i, 0]
        y0 = boxes[i, 1]
        qx = min(max(px, x0), x0 + size)
        qy = min(max(py, y0), y0 + size)
        d = math.hypot(px - qx, py - qy)
        if d < best:
            best = d
            bx = qx
            by = qy
    return best, bx, by


@njit(cache=True)
def static_clearance(px, py, cells, ox, oy, res, occ_edges, free_edges):
    """Signed distance to the occupied-cell union (negative inside)."""
    h, w = cells.shape
    c = int(math.floor((px - ox) / res))
    r = int(math.floor((py - oy) / res))
    if 0 <= r < h and 0 <= c < w and cells[r, c]:
        if free_edges.shape[0] == 0:
            return -np.inf, px, py
        d, qx, qy = nearest_box(px, py, free_edges, res)
        return -d, qx, qy
    if occ_edges.shape[0] == 0:
        return np.inf, px, py
    return nearest_box(px, py, occ_edges, res)


@njit(cache=True)
def batch_static_clearance(points, cells, ox, oy, res, occ_edges, free_edges):
    n = points.shape[0]
    out = np.empty(n)
    for i in range(n):
        d, _, _ = static_clearance(points[i, 0], points[i, 1], cells, ox, oy, res,
                                   occ_edges, free_edges)
        out[i] = d
    return out


@njit(cache=True)
def dda_cast(sx, sy, dx, dy, cells, ox, oy, res, range_max):
    """Exact grid traversal; distance to the first occupied cell boundary.

    Returns range_max when nothing is hit. Leaving the grid counts as a hit
    at the grid edge.
    """
    h, w = cells.shape
    gx = (sx - ox) / res
    gy = (sy - oy) / res
    cx = int(math.floor(gx))
    cy = int(math.floor(gy))
    # crossing distances come from integer boundary indices, not running
    # sums, so long beams do not accumulate rounding error
    step_x = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
    step_y = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
    bx = cx + 1 if step_x > 0 else cx
    by = cy + 1 if step_y > 0 else cy
    t = 0.0
    while t <= range_max:
        t_max_x = (ox + bx * res - sx) / dx if step_x != 0 else np.inf
        t_max_y = (oy + by * res - sy) / dy if step_y != 0 else np.inf
        if t_max_x < t_max_y:
            t = t_max_x
            cx += step_x
            bx += step_x
        else:
            t = t_max_y
            cy += step_y
            by += step_y
        if t > range_max:
            break
        if cx < 0 or cy < 0 or cx >= w or cy >= h:
            return t
        if cells[cy, cx]:
            return t
    return range_max


@njit(cache=True)
def ray_circle(sx, sy, dx, dy, cx, cy, r):
    """Smallest t >= 0 where the unit ray hits the circle, inf if never."""
    fx = sx - cx
    fy = sy - cy
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - r * r
    disc = b * b - c
    if disc < 0.0:
        return np.inf
    sq = math.sqrt(disc)
    t = -b - sq
    if t >= 0.0:
        return t
    if -b + sq >= 0.0:
        return 0.0
    return np.inf


@njit(cache=True)
def cast_scan(sx, sy, angles, cells, ox, oy, res, range_max, agents, contact):
    """All beams of one scan. `angles` are world-frame beam directions."""
    n = angles.shape[0]
    out = np.empty(n)
    h, w = cells.shape
    c0 = int(math.floor((sx - ox) / res))
    r0 = int(math.floor((sy - oy) / res))
    inside = not (0 <= r0 < h and 0 <= c0 < w) or cells[r0, c0]
    for k in range(agents.shape[0]):
        if math.hypot(sx - agents[k, 0], sy - agents[k, 1]) < agents[k, 2]:
            inside = True
    if inside:
        for i in range(n):
            out[i] = contact
        return out
    for i in range(n):
        dx = math.cos(angles[i])
        dy = math.sin(angles[i])
        t = dda_cast(sx, sy, dx, dy, cells, ox, oy, res, range_max)
        for k in range(agents.shape[0]):
            ta = ray_circle(sx, sy, dx, dy, agents[k, 0], agents[k, 1], agents[k, 2])
            if ta < t:
                t = ta
        if t > range_max:
            t = range_max
        if t < contact:
            t = contact
        out[i] = t
    return out
