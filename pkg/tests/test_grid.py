import heapq
import math
from fractions import Fraction

import numpy as np
import pytest

from memslam.config import Config
from memslam.geometry import Pose2, Transform2
from memslam.grid import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    OccupancyGrid,
    assemble_grid,
    inflate_blocked,
    plan_metric,
    write_pgm,
)
from memslam.pose_graph import Link, LinkType, PoseGraph, local_map
from memslam.scan import LaserScan

from conftest import make_node


def single_beam_graph(angle, rng, max_range=4.0):
    g = PoseGraph()
    scan = LaserScan(
        np.array([angle], dtype=np.float32),
        np.array([rng], dtype=np.float32),
        max_range, math.pi * 4 / 3,
    )
    node = make_node(0, scan=scan)
    node.opt_epoch = 0
    g.add_node(node)
    return g, local_map(g, 0, {0}, session=0)


def exact_ray_cells(x0, y0, x1, y1, res):
    """Integer ray-trace oracle in exact rational arithmetic.

    Arguments are decimal strings (grid-relative, positive quadrant) so the
    cell walk is free of binary-float artifacts.
    """
    res = Fraction(res)
    fx, fy = Fraction(x0), Fraction(y0)
    gx, gy = Fraction(x1), Fraction(y1)
    cx, cy = int(fx / res), int(fy / res)
    ex, ey = int(gx / res), int(gy / res)
    cells = [(cx, cy)]
    dx, dy = gx - fx, gy - fy
    steps = abs(ex - cx) + abs(ey - cy)
    tx_next = ((cx + (1 if dx > 0 else 0)) * res - fx) / dx if dx else None
    ty_next = ((cy + (1 if dy > 0 else 0)) * res - fy) / dy if dy else None
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    for _ in range(steps):
        if ty_next is None or (tx_next is not None and tx_next <= ty_next):
            cx += sx
            tx_next += res / abs(dx)
        else:
            cy += sy
            ty_next += res / abs(dy)
        cells.append((cx, cy))
    return cells


def test_two_meter_beam_forty_free_one_occupied():
    g, sub = single_beam_graph(0.0, 2.0)
    grid = assemble_grid(g, sub, resolution=0.05)
    # node at world (0,0), beam endpoint (2,0); grid origin is (-0.1, -0.1)
    assert grid.origin.x == pytest.approx(-0.1)
    cells = exact_ray_cells("0.1", "0.1", "2.1", "0.1", "0.05")
    free_cells = [grid.cells[cy, cx] for cx, cy in cells[:-1]]
    assert len(free_cells) == 40
    assert all(v == FREE for v in free_cells)
    end = cells[-1]
    assert grid.cells[end[1], end[0]] == OCCUPIED
    assert (grid.cells == OCCUPIED).sum() == 1


def test_max_range_beam_free_only():
    g, sub = single_beam_graph(0.0, 4.0)  # range == max: invalid, no endpoint
    grid = assemble_grid(g, sub, resolution=0.05)
    assert (grid.cells == OCCUPIED).sum() == 0
    assert (grid.cells == FREE).sum() >= 79


def test_empty_local_map_all_unknown():
    g = PoseGraph()
    node = make_node(0, scan=LaserScan(np.zeros(0, np.float32), np.zeros(0, np.float32), 4.0, 0.0))
    node.opt_epoch = 0
    g.add_node(node)
    sub = local_map(g, 0, {0}, session=0)
    grid = assemble_grid(g, sub, resolution=0.05)
    assert (grid.cells == UNKNOWN).all()


def test_occupied_wins_conflicts_and_order_invariance():
    # two nodes: one sees a wall endpoint where the other's ray passes free
    def build(order):
        g = PoseGraph()
        s1 = LaserScan(np.array([0.0], np.float32), np.array([1.0], np.float32), 4.0, 1.0)
        s2 = LaserScan(np.array([0.0], np.float32), np.array([2.0], np.float32), 4.0, 1.0)
        ids = []
        for k, scan in order:
            node = make_node(k, scan=scan)
            node.opt_epoch = 0
            g.add_node(node)
            ids.append(k)
        g.add_link(Link(ids[0], ids[1], LinkType.TEMPORARY, Transform2(0, 0, 0)))
        return g, local_map(g, max(ids), set(ids), session=0)

    s1 = LaserScan(np.array([0.0], np.float32), np.array([1.0], np.float32), 4.0, 1.0)
    s2 = LaserScan(np.array([0.0], np.float32), np.array([2.0], np.float32), 4.0, 1.0)
    g1, sub1 = build([(0, s1), (1, s2)])
    g2, sub2 = build([(0, s2), (1, s1)])
    grid1 = assemble_grid(g1, sub1, 0.05)
    grid2 = assemble_grid(g2, sub2, 0.05)
    assert np.array_equal(grid1.cells, grid2.cells)
    cx, cy = grid1.cell_of(1.0, 0.0)
    assert grid1.cells[cy, cx] == OCCUPIED  # node 1's free ray does not erase it


# -- metric planner ------------------------------------------------------------


def hand_grid(rows):
    """Build a grid from text rows: '.'=free, '#'=occupied, ' '=unknown."""
    lut = {".": FREE, "#": OCCUPIED, " ": UNKNOWN}
    cells = np.array([[lut[ch] for ch in row] for row in rows], dtype=np.uint8)
    return OccupancyGrid(resolution=1.0, origin=Pose2(0, 0, 0), cells=cells)


def dijkstra_oracle(grid, blocked, start, goal):
    """Exhaustive grid Dijkstra, independent of the planner implementation."""
    h, w = grid.cells.shape
    dist = {start: 0.0}
    heap = [(0.0, start)]
    while heap:
        d, cell = heapq.heappop(heap)
        if d > dist.get(cell, math.inf):
            continue
        if cell == goal:
            return d
        x, y = cell
        for ddx in (-1, 0, 1):
            for ddy in (-1, 0, 1):
                if ddx == 0 and ddy == 0:
                    continue
                nx, ny = x + ddx, y + ddy
                if not (0 <= nx < w and 0 <= ny < h) or blocked[ny, nx]:
                    continue
                step = math.hypot(ddx, ddy)
                if grid.cells[ny, nx] == UNKNOWN:
                    step *= 2
                nd = d + step
                if nd < dist.get((nx, ny), math.inf):
                    dist[(nx, ny)] = nd
                    heapq.heappush(heap, (nd, (nx, ny)))
    return None


def path_cost(grid, blocked, cells):
    total = 0.0
    for (x0, y0), (x1, y1) in zip(cells, cells[1:]):
        step = math.hypot(x1 - x0, y1 - y0) / grid.resolution
        if grid.cells[y1, x1] == UNKNOWN:
            step *= 2
        total += step
    return total


def test_straight_line_no_obstacles():
    grid = hand_grid(["........"] * 5)
    path = plan_metric(grid, Pose2(0.5, 2.5, 0), Pose2(7.5, 2.5, 0), footprint_radius=0.0)
    assert path is not None
    assert len(path) == 8
    assert all(y == 2.5 for _, y in path)


def test_wall_with_gap_matches_dijkstra_oracle():
    rows = [
        "..........",
        "..........",
        "####.#####",
        "..........",
        "..........",
    ]
    grid = hand_grid(rows)
    blocked = inflate_blocked(grid, footprint_radius=0.0)
    start, goal = Pose2(0.5, 0.5, 0), Pose2(9.5, 4.5, 0)
    path = plan_metric(grid, start, goal, footprint_radius=0.0, blocked=blocked)
    assert path is not None
    cells = [grid.cell_of(x, y) for x, y in path]
    assert (4, 2) in cells  # squeezes through the gap
    oracle = dijkstra_oracle(grid, blocked, grid.cell_of(0.5, 0.5), grid.cell_of(9.5, 4.5))
    assert path_cost(grid, blocked, cells) == pytest.approx(oracle, abs=1e-9)


def test_target_inside_inflated_obstacle_is_none():
    rows = [
        ".....",
        "..#..",
        ".....",
    ]
    grid = hand_grid(rows)
    path = plan_metric(grid, Pose2(0.5, 0.5, 0), Pose2(2.5, 1.5, 0), footprint_radius=1.0)
    assert path is None


def test_unknown_traversed_at_double_cost():
    rows = [
        "..  ..",
        "..  ..",
        "......",
    ]
    grid = hand_grid(rows)
    blocked = inflate_blocked(grid, 0.0)
    start, goal = Pose2(0.5, 0.5, 0), Pose2(5.5, 0.5, 0)
    path = plan_metric(grid, start, goal, footprint_radius=0.0, blocked=blocked)
    cells = [grid.cell_of(x, y) for x, y in path]
    oracle = dijkstra_oracle(grid, blocked, cells[0], cells[-1])
    assert path_cost(grid, blocked, cells) == pytest.approx(oracle, abs=1e-9)
    # detour through the free bottom row beats paying 2x through unknown
    assert any(y == 2 for _, y in cells)


def test_unreachable_returns_none():
    rows = [
        "...#..",
        "...#..",
        "...#..",
    ]
    grid = hand_grid(rows)
    assert plan_metric(grid, Pose2(0.5, 0.5, 0), Pose2(5.5, 0.5, 0), 0.0) is None


def test_start_outside_grid_raises():
    grid = hand_grid(["...."])
    with pytest.raises(ValueError):
        plan_metric(grid, Pose2(50, 50, 0), Pose2(0.5, 0.5, 0), 0.0)


def test_inflation_radius_cells():
    rows = [
        ".....",
        "..#..",
        ".....",
    ]
    grid = hand_grid(rows)
    blocked = inflate_blocked(grid, footprint_radius=1.0)
    assert blocked[1, 2] and blocked[1, 1] and blocked[1, 3]
    assert blocked[0, 2] and blocked[2, 2]
    assert not blocked[0, 0]


def test_pgm_export(tmp_path):
    grid = hand_grid([".# ", "  ."])
    out = tmp_path / "map.pgm"
    write_pgm(grid, out)
    raw = out.read_bytes()
    assert raw.startswith(b"P5\n3 2\n255\n")
    img = np.frombuffer(raw[len(b"P5\n3 2\n255\n"):], dtype=np.uint8).reshape(2, 3)
    # image rows are top-down: row 0 of the image is the top (y max) row
    assert img[1, 0] == 254 and img[1, 1] == 0 and img[1, 2] == 205
    sidecar = tmp_path / "map.pgm.txt"
    assert "resolution = 1.0" in sidecar.read_text()
