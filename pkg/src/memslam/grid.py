"""Occupancy grid assembly from local-map scans, costmap inflation, and
grid path planning."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import distance_transform_edt

from . import kernels
from .geometry import Pose2
from .pose_graph import PoseGraph, Subgraph

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

_PGM_VALUES = {FREE: 254, UNKNOWN: 205, OCCUPIED: 0}


@dataclass
class OccupancyGrid:
    resolution: float
    origin: Pose2
    cells: np.ndarray  # (H, W) uint8 of UNKNOWN/FREE/OCCUPIED

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        cx = int(math.floor((x - self.origin.x) / self.resolution + 1e-6))
        cy = int(math.floor((y - self.origin.y) / self.resolution + 1e-6))
        return cx, cy

    def center_of(self, cx: int, cy: int) -> tuple[float, float]:
        return (
            self.origin.x + (cx + 0.5) * self.resolution,
            self.origin.y + (cy + 0.5) * self.resolution,
        )

    def contains(self, cx: int, cy: int) -> bool:
        return 0 <= cx < self.width and 0 <= cy < self.height


def assemble_grid(g: PoseGraph, sub: Subgraph, resolution: float) -> OccupancyGrid:
    """Render the local map's scans into an occupancy grid.

    Every beam traces free space; valid beams additionally mark their
    endpoint occupied. Occupied wins conflicts, so the result is independent
    of node order.
    """
    origins = []
    endpoints = []
    per_node = []
    for nid in sorted(sub.ids):
        pose = sub.poses.get(nid)
        if pose is None or nid not in g.nodes:
            continue
        scan = g.nodes[nid].scan
        if not len(scan):
            continue
        a = scan.angles.astype(np.float64) + pose.theta
        r = scan.ranges.astype(np.float64)
        ex = pose.x + r * np.cos(a)
        ey = pose.y + r * np.sin(a)
        occ_flag = scan.valid.astype(np.uint8)
        origins.append((pose.x, pose.y))
        endpoints.append((ex, ey))
        per_node.append(occ_flag)

    if not origins:
        return OccupancyGrid(resolution, Pose2(0.0, 0.0, 0.0), np.zeros((1, 1), dtype=np.uint8))

    all_x = np.concatenate([[o[0] for o in origins]] + [e[0] for e in endpoints])
    all_y = np.concatenate([[o[1] for o in origins]] + [e[1] for e in endpoints])
    margin = 2 * resolution
    ox = math.floor((all_x.min() - margin) / resolution) * resolution
    oy = math.floor((all_y.min() - margin) / resolution) * resolution
    w = int(math.ceil((all_x.max() + margin - ox) / resolution)) + 1
    h = int(math.ceil((all_y.max() + margin - oy) / resolution)) + 1

    free = np.zeros((h, w), dtype=np.uint8)
    occ = np.zeros((h, w), dtype=np.uint8)
    for (x0, y0), (ex, ey), flags in zip(origins, endpoints, per_node):
        kernels.mark_rays(
            free, occ, x0, y0,
            np.ascontiguousarray(ex), np.ascontiguousarray(ey),
            np.ascontiguousarray(flags), ox, oy, resolution,
        )

    cells = np.zeros((h, w), dtype=np.uint8)
    cells[free > 0] = FREE
    cells[occ > 0] = OCCUPIED
    return OccupancyGrid(resolution, Pose2(ox, oy, 0.0), cells)


def inflate_blocked(grid: OccupancyGrid, footprint_radius: float) -> np.ndarray:
    """Mask of cells within the footprint radius of an occupied cell."""
    occupied = grid.cells == OCCUPIED
    if not occupied.any():
        return np.zeros_like(occupied)
    dist = distance_transform_edt(~occupied) * grid.resolution
    return dist <= footprint_radius


def plan_metric(
    grid: OccupancyGrid,
    start: Pose2,
    target: Pose2,
    footprint_radius: float,
    blocked: Optional[np.ndarray] = None,
) -> Optional[list[tuple[float, float]]]:
    """8-connected grid path from start to target avoiding inflated obstacles.

    Unknown cells are traversable at twice the cost, which lets plans run
    into space the grid has not covered yet. Returns cell-center waypoints
    or None when the target is blocked or unreachable.
    """
    sx, sy = grid.cell_of(start.x, start.y)
    if not grid.contains(sx, sy):
        raise ValueError("start pose outside the grid")
    gx, gy = grid.cell_of(target.x, target.y)
    if not grid.contains(gx, gy):
        return None
    if blocked is None:
        blocked = inflate_blocked(grid, footprint_radius)

    cost = np.where(grid.cells == FREE, 0, 1).astype(np.uint8)
    cost[blocked] = 2

    # the robot demonstrably occupies its own footprint: lift the inflation
    # there (never a truly occupied cell) so a wall-hugging start can leave
    rad = int(math.ceil(footprint_radius / grid.resolution)) + 1
    y0, y1 = max(sy - rad, 0), min(sy + rad + 1, grid.height)
    x0, x1 = max(sx - rad, 0), min(sx + rad + 1, grid.width)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    near = ((yy - sy) ** 2 + (xx - sx) ** 2) * grid.resolution**2 <= (
        footprint_radius + grid.resolution
    ) ** 2
    patch = cost[y0:y1, x0:x1]
    unblockable = near & (grid.cells[y0:y1, x0:x1] != OCCUPIED) & (patch == 2)
    patch[unblockable] = np.where(
        grid.cells[y0:y1, x0:x1][unblockable] == FREE, 0, 1
    ).astype(np.uint8)

    cells = kernels.astar_grid(cost, sx, sy, gx, gy)
    if len(cells) == 0:
        return None
    return [grid.center_of(int(cx), int(cy)) for cx, cy in cells]


def write_pgm(grid: OccupancyGrid, path: str | Path) -> None:
    """P5 PGM image (free 254, unknown 205, occupied 0) plus a text sidecar
    with resolution and origin, written next to it as `<name>.txt`."""
    path = Path(path)
    lut = np.zeros(256, dtype=np.uint8)
    for value, gray in _PGM_VALUES.items():
        lut[value] = gray
    img = lut[np.flipud(grid.cells)]  # image rows top-down
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode()
    path.write_bytes(header + img.tobytes())
    sidecar = path.with_suffix(path.suffix + ".txt")
    sidecar.write_text(
        f"resolution = {grid.resolution}\n"
        f"origin = {grid.origin.x} {grid.origin.y} {grid.origin.theta}\n"
    )
