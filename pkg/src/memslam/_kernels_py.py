"""Numpy fallback for the hot kernels.

Mirrors the API of the compiled extension `memslam._kernels`; the active
backend is chosen in `memslam.kernels`. All functions are deterministic.
"""

from __future__ import annotations

import heapq
import math

import numpy as np
from scipy.spatial import cKDTree

BACKEND = "python"

_SQRT2 = math.sqrt(2.0)


def raycast(
    px: float,
    py: float,
    ptheta: float,
    angles: np.ndarray,
    segments: np.ndarray,
    circles: np.ndarray,
    max_range: float,
) -> np.ndarray:
    """Ranges of rays from (px, py) at world angles ptheta + angles.

    segments is (S, 4) [x1 y1 x2 y2], circles is (K, 3) [cx cy r]. A miss
    returns max_range.
    """
    a = np.asarray(angles, dtype=np.float64) + ptheta
    dx = np.cos(a)
    dy = np.sin(a)
    best = np.full(len(a), max_range, dtype=np.float64)

    if len(segments):
        seg = np.asarray(segments, dtype=np.float64)
        ex = seg[:, 2] - seg[:, 0]
        ey = seg[:, 3] - seg[:, 1]
        # o + t*d = p1 + u*e, per (ray, segment) pair
        wx = seg[:, 0] - px
        wy = seg[:, 1] - py
        denom = dx[:, None] * ey[None, :] - dy[:, None] * ex[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (wx[None, :] * ey[None, :] - wy[None, :] * ex[None, :]) / denom
            u = (wx[None, :] * dy[:, None] - wy[None, :] * dx[:, None]) / denom
        hit = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
        t = np.where(hit, t, np.inf)
        best = np.minimum(best, t.min(axis=1, initial=np.inf))

    if len(circles):
        circ = np.asarray(circles, dtype=np.float64)
        cx = circ[:, 0] - px
        cy = circ[:, 1] - py
        r2 = circ[:, 2] ** 2
        b = dx[:, None] * cx[None, :] + dy[:, None] * cy[None, :]
        c = (cx**2 + cy**2)[None, :] - r2[None, :]
        disc = b * b - c
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t_near = b - sq
        t_far = b + sq
        t = np.where(t_near >= 0.0, t_near, np.where(t_far >= 0.0, t_far, np.inf))
        t = np.where(ok, t, np.inf)
        best = np.minimum(best, t.min(axis=1, initial=np.inf))

    return np.minimum(best, max_range)


def nearest_neighbors(ref: np.ndarray, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index into ref and distance of the nearest ref point per query point."""
    tree = cKDTree(np.asarray(ref, dtype=np.float64))
    dist, idx = tree.query(np.asarray(query, dtype=np.float64))
    return idx.astype(np.int64), dist.astype(np.float64)


def mark_rays(
    free: np.ndarray,
    occ: np.ndarray,
    x0: float,
    y0: float,
    ex: np.ndarray,
    ey: np.ndarray,
    occ_flag: np.ndarray,
    ox: float,
    oy: float,
    res: float,
) -> None:
    """Grid-traverse rays from (x0, y0) to each endpoint, marking cells.

    Every traversed cell except the final one is marked free; the final cell
    is marked occupied when occ_flag is set, free otherwise. Marks happening
    outside the raster are dropped.
    """
    h, w = free.shape
    eps = 1e-6
    n = len(ex)
    cx0 = int(math.floor((x0 - ox) / res + eps))
    cy0 = int(math.floor((y0 - oy) / res + eps))

    cx1 = np.floor((np.asarray(ex, dtype=np.float64) - ox) / res + eps).astype(np.int64)
    cy1 = np.floor((np.asarray(ey, dtype=np.float64) - oy) / res + eps).astype(np.int64)

    cx = np.full(n, cx0, dtype=np.int64)
    cy = np.full(n, cy0, dtype=np.int64)
    dxr = np.asarray(ex, dtype=np.float64) - x0
    dyr = np.asarray(ey, dtype=np.float64) - y0
    stepx = np.where(dxr > 0, 1, -1).astype(np.int64)
    stepy = np.where(dyr > 0, 1, -1).astype(np.int64)

    with np.errstate(divide="ignore"):
        tdx = np.where(dxr != 0.0, np.abs(res / dxr), np.inf)
        tdy = np.where(dyr != 0.0, np.abs(res / dyr), np.inf)
    # t to the first vertical / horizontal cell boundary
    bx = ox + (cx0 + (stepx > 0)) * res
    by = oy + (cy0 + (stepy > 0)) * res
    with np.errstate(divide="ignore", invalid="ignore"):
        tmx = np.where(dxr != 0.0, (bx - x0) / dxr, np.inf)
        tmy = np.where(dyr != 0.0, (by - y0) / dyr, np.inf)

    active = np.ones(n, dtype=bool)
    max_steps = int(np.max(np.abs(cx1 - cx0) + np.abs(cy1 - cy0), initial=0)) + 1
    for _ in range(max_steps):
        done = active & (cx == cx1) & (cy == cy1)
        if done.any():
            active = active & ~done
        if not active.any():
            break
        inb = active & (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        free[cy[inb], cx[inb]] = 1
        takex = tmx <= tmy
        mx = active & takex
        my = active & ~takex
        cx[mx] += stepx[mx]
        tmx[mx] += tdx[mx]
        cy[my] += stepy[my]
        tmy[my] += tdy[my]

    inb = (cx1 >= 0) & (cx1 < w) & (cy1 >= 0) & (cy1 < h)
    flags = np.asarray(occ_flag, dtype=bool)
    fsel = inb & ~flags
    osel = inb & flags
    free[cy1[fsel], cx1[fsel]] = 1
    occ[cy1[osel], cx1[osel]] = 1


def astar_grid(
    cost: np.ndarray, sx: int, sy: int, gx: int, gy: int
) -> np.ndarray:
    """A* over an 8-connected grid.

    cost cells: 0 free (weight 1), 1 unknown (weight 2), 2 blocked. Returns
    the path as an (N, 2) array of (x, y) cells including both endpoints, or
    an empty array if the goal is blocked or unreachable.
    """
    h, w = cost.shape
    if not (0 <= sx < w and 0 <= sy < h and 0 <= gx < w and 0 <= gy < h):
        return np.zeros((0, 2), dtype=np.int64)
    if cost[gy, gx] == 2:
        return np.zeros((0, 2), dtype=np.int64)

    dist = np.full((h, w), np.inf)
    parent = np.full((h, w), -1, dtype=np.int64)
    dist[sy, sx] = 0.0
    heap = [(math.hypot(gx - sx, gy - sy), 0.0, sx, sy)]
    steps = (
        (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
        (1, 1, _SQRT2), (1, -1, _SQRT2), (-1, 1, _SQRT2), (-1, -1, _SQRT2),
    )
    while heap:
        f, g, x, y = heapq.heappop(heap)
        if g > dist[y, x]:
            continue
        if x == gx and y == gy:
            break
        for ddx, ddy, base in steps:
            nx, ny = x + ddx, y + ddy
            if not (0 <= nx < w and 0 <= ny < h):
                continue
            c = cost[ny, nx]
            if c == 2:
                continue
            ng = g + base * (2.0 if c == 1 else 1.0)
            if ng < dist[ny, nx]:
                dist[ny, nx] = ng
                parent[ny, nx] = y * w + x
                heapq.heappush(heap, (ng + math.hypot(gx - nx, gy - ny), ng, nx, ny))

    if not np.isfinite(dist[gy, gx]):
        return np.zeros((0, 2), dtype=np.int64)
    path = []
    cx, cy = gx, gy
    while True:
        path.append((cx, cy))
        if cx == sx and cy == sy:
            break
        p = parent[cy, cx]
        cx, cy = int(p % w), int(p // w)
    path.reverse()
    return np.array(path, dtype=np.int64)


def dwa_evaluate(
    vs: np.ndarray,
    ws: np.ndarray,
    x: float,
    y: float,
    theta: float,
    horizon: float,
    dt: float,
    obstacles: np.ndarray,
    blocked: np.ndarray,
    box: np.ndarray,
    footprint: float,
    lookx: float,
    looky: float,
    w_progress: float,
    w_heading: float,
    w_clear: float,
    clear_cap: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Score each (v, w) sample by forward-simulating its arc.

    obstacles is (N, 2) live points; blocked is an inflated occupancy mask
    with geometry box = [ox, oy, res]. Returns (scores, collides). Arcs that
    leave the raster are not treated as collisions (unknown space).
    """
    k = len(vs)
    steps = max(int(round(horizon / dt)), 1)
    t = (np.arange(1, steps + 1) * dt)[None, :]
    v = np.asarray(vs, dtype=np.float64)[:, None]
    w = np.asarray(ws, dtype=np.float64)[:, None]

    th = theta + w * t
    straight = np.abs(w) < 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        px = np.where(
            straight,
            x + v * t * math.cos(theta),
            x + v / np.where(straight, 1.0, w) * (np.sin(th) - math.sin(theta)),
        )
        py = np.where(
            straight,
            y + v * t * math.sin(theta),
            y - v / np.where(straight, 1.0, w) * (np.cos(th) - math.cos(theta)),
        )

    collides = np.zeros(k, dtype=np.uint8)
    clearance = np.full(k, clear_cap, dtype=np.float64)
    if len(obstacles):
        obs = np.asarray(obstacles, dtype=np.float64)
        d = np.sqrt(
            (px[:, :, None] - obs[None, None, :, 0]) ** 2
            + (py[:, :, None] - obs[None, None, :, 1]) ** 2
        )
        dmin = d.min(axis=(1, 2))
        collides |= (dmin < footprint).astype(np.uint8)
        clearance = np.minimum(clearance, dmin - footprint)

    if blocked.size:
        ox, oy, res = box
        h, wd = blocked.shape
        cxs = np.floor((px - ox) / res + 1e-6).astype(np.int64)
        cys = np.floor((py - oy) / res + 1e-6).astype(np.int64)
        inb = (cxs >= 0) & (cxs < wd) & (cys >= 0) & (cys < h)
        hit = np.zeros_like(px, dtype=bool)
        hit[inb] = blocked[cys[inb], cxs[inb]] > 0
        collides |= hit.any(axis=1).astype(np.uint8)

    end_dx = px[:, -1] - lookx
    end_dy = py[:, -1] - looky
    progress = -np.sqrt(end_dx**2 + end_dy**2)
    to_look = np.arctan2(looky - py[:, -1], lookx - px[:, -1])
    herr = np.abs(np.arctan2(np.sin(to_look - th[:, -1]), np.cos(to_look - th[:, -1])))
    scores = (
        w_progress * progress
        - w_heading * herr
        + w_clear * np.minimum(np.maximum(clearance, 0.0), clear_cap)
    )
    return scores.astype(np.float64), collides
