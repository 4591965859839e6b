"""Simplified dynamic-window local controller."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .config import Config
from .geometry import Pose2, wrap_angle
from .grid import OccupancyGrid


@dataclass(slots=True)
class VelocityCommand:
    v: float
    omega: float


def _lookahead_point(robot: Pose2, path: list[tuple[float, float]], dist: float) -> tuple[float, float]:
    best = min(
        range(len(path)),
        key=lambda k: math.hypot(path[k][0] - robot.x, path[k][1] - robot.y),
    )
    for k in range(best, len(path)):
        if math.hypot(path[k][0] - robot.x, path[k][1] - robot.y) >= dist:
            return path[k]
    return path[-1]


def control_step(
    robot: Pose2,
    metric_path: list[tuple[float, float]],
    live_obstacles: np.ndarray,
    cfg: Config,
    blocked: Optional[np.ndarray] = None,
    grid: Optional[OccupancyGrid] = None,
) -> VelocityCommand:
    """Pick the best collision-free (v, omega) sample toward the path.

    Arcs are forward-simulated over the horizon and discarded when they hit
    a live obstacle point or an inflated grid cell; survivors are scored by
    progress toward the lookahead point, heading alignment, and clearance.
    When everything collides the fallback is to rotate in place toward the
    path.
    """
    if not metric_path:
        raise ValueError("control_step needs a metric path")
    look = _lookahead_point(robot, metric_path, cfg.lookahead)

    v_samples = np.linspace(0.0, cfg.v_max, cfg.dwa_v_samples)
    w_samples = np.linspace(-cfg.omega_max, cfg.omega_max, cfg.dwa_w_samples)
    vs, ws = [], []
    for v in v_samples:
        for w in w_samples:
            if v == 0.0 and w == 0.0:
                continue
            vs.append(v)
            ws.append(w)
    vs = np.array(vs)
    ws = np.array(ws)

    if blocked is not None and grid is not None:
        mask = blocked.astype(np.uint8)
        box = np.array([grid.origin.x, grid.origin.y, grid.resolution])
    else:
        mask = np.zeros((0, 0), dtype=np.uint8)
        box = np.zeros(0)

    obstacles = np.asarray(live_obstacles, dtype=np.float64).reshape(-1, 2)
    scores, collides = kernels.dwa_evaluate(
        vs, ws, robot.x, robot.y, robot.theta,
        cfg.dwa_horizon, cfg.dwa_dt,
        obstacles, mask, box,
        cfg.footprint_radius,
        look[0], look[1],
        cfg.dwa_w_progress, cfg.dwa_w_heading, cfg.dwa_w_clear,
        cfg.dwa_clear_cap,
    )

    ok = collides == 0
    if not ok.any():
        herr = wrap_angle(math.atan2(look[1] - robot.y, look[0] - robot.x) - robot.theta)
        return VelocityCommand(0.0, math.copysign(cfg.omega_max / 2.0, herr))
    masked = np.where(ok, scores, -np.inf)
    best = int(np.argmax(masked))
    return VelocityCommand(float(vs[best]), float(ws[best]))
