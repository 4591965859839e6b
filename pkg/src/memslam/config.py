"""Runtime parameters: the core single-letter knobs plus simulator, ICP,
optimizer, and controller extensions.

Config files are line-oriented `key = value`; keys match the field names
below (single letters lowercase). Unknown keys are rejected so typos in
experiment configs fail loudly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path


@dataclass
class Config:
    # core parameters
    a: float = 1.0     # acquisition period, seconds between map updates
    c: float = 0.3     # ICP correspondence-ratio acceptance threshold
    d: float = 0.5     # goal radius, meters
    f: int = 10        # planner iterations on a stalled target before moving on
    h: float = 0.11    # loop-closure hypothesis probability threshold
    i: int = 5         # minimum RANSAC word inliers
    l: float = 0.5     # close-node radius, meters
    m: int = 2         # max nodes retrieved from LTM per map update
    o: float = 0.25    # immunized fraction of WM size
    r: float = 4.0     # laser range / candidate radius, meters
    s: int = 20        # short-term memory size, nodes
    t: float = 0.2     # map update time budget, seconds
    y: float = 0.3     # signature similarity threshold for weight bumps

    # feature toggles
    enable_reduction: bool = True
    enable_proximity: bool = True

    # scan matching
    icp_match_dist: float = 1.0
    icp_inlier_dist: float = 0.1
    icp_max_iter: int = 50
    icp_tol: float = 1e-6
    # coarse-to-fine re-initialization search, tried only when plain ICP
    # ends badly (well-initialized calls never pay for it)
    icp_search_trigger: float = 1e-4
    icp_search_rot: float = 30.0      # degrees, +/- around the initial guess
    icp_search_rot_step: float = 10.0
    icp_search_trans: float = 0.5     # meters, +/- around the initial guess
    icp_search_trans_step: float = 0.25
    icp_search_levels: int = 4

    # visual transform estimation
    ransac_iters: int = 100
    ransac_inlier_dist: float = 0.1

    # hypothesis filter transition model
    bayes_leak: float = 0.1      # node mass flowing to new-location
    bayes_new_keep: float = 0.1  # new-location mass staying put

    # largest pose correction a laser proximity link may claim; alignments
    # beyond this are treated as slides along ambiguous geometry
    prox_max_correction: float = 1.5
    prox_max_rotation_deg: float = 45.0

    # graph optimizer
    opt_max_iter: int = 30
    opt_tol: float = 1e-8
    opt_lambda0: float = 1e-3

    # occupancy grid / metric planner
    grid_resolution: float = 0.05
    footprint_radius: float = 0.18

    # local controller
    v_max: float = 0.4
    omega_max: float = 1.2
    dwa_horizon: float = 1.5
    dwa_dt: float = 0.15
    dwa_v_samples: int = 6
    dwa_w_samples: int = 11
    dwa_w_progress: float = 1.0
    dwa_w_heading: float = 0.4
    dwa_w_clear: float = 0.3
    dwa_clear_cap: float = 1.0
    lookahead: float = 0.8

    # simulator
    seed: int = 1
    sessions: int = 1
    start_x: float = 0.0
    start_y: float = 0.0
    start_theta: float = 0.0
    sigma_v: float = 0.02
    sigma_omega: float = 0.02
    beams: int = 341
    laser_fov_deg: float = 240.0
    cam_fov_deg: float = 58.0
    cam_min_range: float = 0.8
    cam_max_range: float = 3.5
    facing_half_deg: float = 75.0
    obstacle_sensor_range: float = 3.0
    robot_radius: float = 0.15
    control_dt: float = 0.1
    agent_speed: float = 0.5
    patrol_cycles: int = 1
    teleop_close: bool = False  # after the last waypoint, drive back to the first
    warmup_s: float = 8.0
    max_updates: int = 100000

    # deterministic duration model for the time budget (seconds)
    dur_base: float = 0.01
    dur_per_node: float = 0.0005

    def __post_init__(self):
        if not (0.0 < self.h < 1.0):
            raise ValueError("h must be in (0, 1)")
        if not (0.0 < self.y < 1.0):
            raise ValueError("y must be in (0, 1)")
        if not (0.0 < self.c < 1.0):
            raise ValueError("c must be in (0, 1)")
        if not (0.0 < self.o < 1.0):
            raise ValueError("o must be in (0, 1)")
        if self.l >= self.r:
            raise ValueError("l must be smaller than r")
        for name in ("a", "d", "t", "s", "m", "f", "i", "r", "l"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def laser_fov(self) -> float:
        return math.radians(self.laser_fov_deg)

    @property
    def cam_fov(self) -> float:
        return math.radians(self.cam_fov_deg)

    @property
    def facing_half(self) -> float:
        return math.radians(self.facing_half_deg)


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _parse_value(name: str, raw: str):
    ftype = _FIELD_TYPES[name]
    if ftype == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean for {name}: {raw!r}")
    if ftype == "int":
        return int(raw)
    if ftype == "tuple":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    return float(raw)


def load_config(path: str | Path) -> Config:
    """Parse a `key = value` config file; unknown keys are an error."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected `key = value`, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    return Config(**values)
