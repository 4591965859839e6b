"""Deterministic 2D world simulation driving the full SLAM + planning loop.

World files are line oriented:
    S x1 y1 x2 y2          wall segment
    F id x y [facing_deg]  feature landmark (facing limits view directions)
    O x y r                low obstacle disc, invisible to the laser
    A x y r tokens...      dynamic agent; tokens are waypoint `x y` pairs,
                           `p<seconds>` pauses between them
    W name x y theta       named waypoint
    # comment

Simulated time drives the update (period a) and control (period control_dt)
rates; odometry noise is the only stochastic input and comes from the run
seed, so identical (world, config) runs are bit-identical.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import kernels
from .config import Config
from .control import VelocityCommand, control_step
from .geometry import Pose2, wrap_angle
from .grid import OccupancyGrid, assemble_grid, inflate_blocked, plan_metric
from .planners import Patrol, TopologicalPath, plan_topological
from .scan import LaserScan
from .signature import Signature
from .system import SplamSystem
from .memory import Disposition


# ---------------------------------------------------------------------------
# world model


@dataclass
class Feature:
    word_id: int
    x: float
    y: float
    facing: Optional[float] = None  # radians; None = visible from anywhere


@dataclass
class Agent:
    x: float
    y: float
    radius: float
    script: list  # ("goto", x, y) | ("pause", seconds)
    _idx: int = 0
    _pause_left: float = 0.0

    def step(self, dt: float, speed: float) -> None:
        if not self.script:
            return
        if self._pause_left > 0.0:
            self._pause_left = max(0.0, self._pause_left - dt)
            return
        kind = self.script[self._idx]
        if kind[0] == "pause":
            self._pause_left = kind[1]
            self._idx = (self._idx + 1) % len(self.script)
            return
        _, tx, ty = kind
        dx, dy = tx - self.x, ty - self.y
        dist = math.hypot(dx, dy)
        step = speed * dt
        if dist <= step:
            self.x, self.y = tx, ty
            self._idx = (self._idx + 1) % len(self.script)
        else:
            self.x += dx / dist * step
            self.y += dy / dist * step


@dataclass
class World:
    segments: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    features: list[Feature] = field(default_factory=list)
    low_obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    agents: list[Agent] = field(default_factory=list)
    waypoints: list[tuple[str, Pose2]] = field(default_factory=list)

    def agent_circles(self) -> np.ndarray:
        if not self.agents:
            return np.zeros((0, 3))
        return np.array([[a.x, a.y, a.radius] for a in self.agents])


def load_world(path: str | Path) -> World:
    segments, features, lows, agents, waypoints = [], [], [], [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        tokens = stripped.split()
        tag = tokens[0].upper()
        try:
            if tag == "S":
                segments.append([float(v) for v in tokens[1:5]])
            elif tag == "F":
                facing = math.radians(float(tokens[4])) if len(tokens) > 4 else None
                features.append(
                    Feature(int(tokens[1]), float(tokens[2]), float(tokens[3]), facing)
                )
            elif tag == "O":
                lows.append([float(v) for v in tokens[1:4]])
            elif tag == "A":
                x, y, r = (float(v) for v in tokens[1:4])
                script = []
                rest = tokens[4:]
                k = 0
                while k < len(rest):
                    if rest[k].lower().startswith("p"):
                        script.append(("pause", float(rest[k][1:])))
                        k += 1
                    else:
                        script.append(("goto", float(rest[k]), float(rest[k + 1])))
                        k += 2
                agents.append(Agent(x, y, r, script))
            elif tag == "W":
                waypoints.append(
                    (tokens[1], Pose2(float(tokens[2]), float(tokens[3]), float(tokens[4])))
                )
            else:
                raise ValueError(f"unknown record {tag!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad world line {line!r}") from exc
    return World(
        segments=np.array(segments).reshape(-1, 4),
        features=features,
        low_obstacles=np.array(lows).reshape(-1, 3),
        agents=agents,
        waypoints=waypoints,
    )


# ---------------------------------------------------------------------------
# sensors


def raycast_scan(world: World, true_pose: Pose2, cfg: Config) -> LaserScan:
    """Laser scan at the true pose; agents block beams, low obstacles do not."""
    angles = np.linspace(-cfg.laser_fov / 2.0, cfg.laser_fov / 2.0, cfg.beams)
    ranges = kernels.raycast(
        true_pose.x, true_pose.y, true_pose.theta,
        angles, world.segments, world.agent_circles(), cfg.r,
    )
    return LaserScan(angles.astype(np.float32), ranges.astype(np.float32), cfg.r, cfg.laser_fov)


def observe_signature(world: World, true_pose: Pose2, cfg: Config) -> Signature:
    """Words for features inside the forward view cone, unoccluded by walls,
    and (for directional features) viewed from their facing side."""
    words = []
    landmarks = {}
    c, s = math.cos(true_pose.theta), math.sin(true_pose.theta)
    for feat in world.features:
        dx, dy = feat.x - true_pose.x, feat.y - true_pose.y
        dist = math.hypot(dx, dy)
        if not (cfg.cam_min_range <= dist <= cfg.cam_max_range):
            continue
        bearing = wrap_angle(math.atan2(dy, dx) - true_pose.theta)
        if abs(bearing) > cfg.cam_fov / 2.0:
            continue
        if feat.facing is not None:
            view_dir = math.atan2(-dy, -dx)  # direction feature -> robot
            if abs(wrap_angle(view_dir - feat.facing)) > cfg.facing_half:
                continue
        if len(world.segments):
            hit = kernels.raycast(
                true_pose.x, true_pose.y, 0.0,
                np.array([math.atan2(dy, dx)]), world.segments,
                np.zeros((0, 3)), dist + 1.0,
            )[0]
            if hit < dist - 1e-9:
                continue
        rel_x = c * dx + s * dy
        rel_y = -s * dx + c * dy
        words.append(feat.word_id)
        landmarks[feat.word_id] = (rel_x, rel_y)
    return Signature(tuple(words), landmarks)


def low_obstacle_points(world: World, true_pose: Pose2, cfg: Config) -> np.ndarray:
    """Nearest boundary point of each low obstacle the short-range forward
    sensor can see, in the robot frame."""
    pts = []
    for cx, cy, r in world.low_obstacles:
        dx, dy = cx - true_pose.x, cy - true_pose.y
        dist = math.hypot(dx, dy)
        if dist - r > cfg.obstacle_sensor_range or dist < 1e-9:
            continue
        bearing = wrap_angle(math.atan2(dy, dx) - true_pose.theta)
        if abs(bearing) > cfg.cam_fov / 2.0:
            continue
        near = dist - r
        c, s = math.cos(true_pose.theta), math.sin(true_pose.theta)
        bx = true_pose.x + dx / dist * near
        by = true_pose.y + dy / dist * near
        rx, ry = bx - true_pose.x, by - true_pose.y
        pts.append((c * rx + s * ry, -s * rx + c * ry))
    return np.array(pts).reshape(-1, 2)


# ---------------------------------------------------------------------------
# robot kinematics


@dataclass
class RobotState:
    true_pose: Pose2
    odom_pose: Pose2


def _arc(p: Pose2, v: float, w: float, dt: float) -> Pose2:
    if abs(w) < 1e-9:
        return Pose2(p.x + v * dt * math.cos(p.theta), p.y + v * dt * math.sin(p.theta), p.theta)
    th = p.theta + w * dt
    return Pose2(
        p.x + v / w * (math.sin(th) - math.sin(p.theta)),
        p.y - v / w * (math.cos(th) - math.cos(p.theta)),
        th,
    )


def _segment_clearance(x: float, y: float, segments: np.ndarray) -> float:
    if not len(segments):
        return math.inf
    p = np.array([x, y])
    a = segments[:, :2]
    d = segments[:, 2:] - a
    length2 = (d**2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip(((p - a) * d).sum(axis=1) / np.where(length2 > 0, length2, 1.0), 0.0, 1.0)
    closest = a + t[:, None] * d
    return float(np.hypot(*(closest - p).T).min())


def step_robot(
    world: World,
    robot: RobotState,
    cmd: VelocityCommand,
    dt: float,
    rng: np.random.Generator,
    cfg: Config,
) -> None:
    """Integrate one control period: exact arcs, collision stop on the true
    pose, multiplicative odometry noise on the commanded twist."""
    candidate = _arc(robot.true_pose, cmd.v, cmd.omega, dt)
    clearance = _segment_clearance(candidate.x, candidate.y, world.segments)
    for ox, oy, orad in world.low_obstacles:
        clearance = min(clearance, math.hypot(candidate.x - ox, candidate.y - oy) - orad)
    for agent in world.agents:
        clearance = min(
            clearance, math.hypot(candidate.x - agent.x, candidate.y - agent.y) - agent.radius
        )
    if clearance >= cfg.robot_radius:
        robot.true_pose = candidate
    else:
        # blocked: rotation still happens, translation stops at contact
        robot.true_pose = Pose2(robot.true_pose.x, robot.true_pose.y, candidate.theta)

    eta_v, eta_w = rng.normal(0.0, 1.0, size=2)
    robot.odom_pose = _arc(
        robot.odom_pose,
        cmd.v * (1.0 + cfg.sigma_v * eta_v),
        cmd.omega * (1.0 + cfg.sigma_omega * eta_w),
        dt,
    )


# ---------------------------------------------------------------------------
# scenario driver


@dataclass
class UpdateRow:
    time: float
    wm_size: int
    ltm_size: int
    update_ms: float
    loop_closures: int
    proximity_links: int
    ate: float


@dataclass
class GoalOutcome:
    session: int
    waypoint: str
    node_id: int
    status: str  # "reached" / "failed"
    true_error: float


@dataclass
class ScenarioReport:
    rows: list[UpdateRow] = field(default_factory=list)
    goals: list[GoalOutcome] = field(default_factory=list)
    waypoint_nodes: dict[str, int] = field(default_factory=dict)
    true_poses: dict[int, Pose2] = field(default_factory=dict)
    laser_proximity_total: int = 0
    visual_proximity_total: int = 0
    loop_closure_total: int = 0

    def csv_text(self) -> str:
        lines = ["time,wm_size,ltm_size,update_ms,loop_closures,proximity_links,ate"]
        for r in self.rows:
            lines.append(
                f"{r.time:.1f},{r.wm_size},{r.ltm_size},{r.update_ms:.3f},"
                f"{r.loop_closures},{r.proximity_links},{r.ate:.6f}"
            )
        return "\n".join(lines) + "\n"


def ate_rmse(est: dict[int, Pose2], truth: dict[int, Pose2]) -> float:
    """RMSE of estimated vs true positions after a best rigid 2D alignment."""
    ids = sorted(set(est) & set(truth))
    if len(ids) < 2:
        return 0.0
    x = np.array([[est[i].x, est[i].y] for i in ids])
    y = np.array([[truth[i].x, truth[i].y] for i in ids])
    mx, my = x.mean(axis=0), y.mean(axis=0)
    h = (x - mx).T @ (y - my)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, d]) @ u.T
    aligned = (x - mx) @ rot.T + my
    return float(np.sqrt(((aligned - y) ** 2).sum(axis=1).mean()))


class ScenarioRunner:
    """Owns the simulated clock and drives sensing, SLAM updates, planning,
    and control for one or more sessions."""

    def __init__(
        self,
        world: World,
        cfg: Config,
        store_path: str | Path,
        duration_source: Optional[Callable[[int, int], float]] = None,
        measured_time: bool = False,
    ):
        self.world = world
        self.cfg = cfg
        self.system = SplamSystem(cfg, store_path)
        self.report = ScenarioReport()
        self.duration_source = duration_source
        self.measured_time = measured_time
        self.rng = np.random.default_rng(cfg.seed)
        self.robot = RobotState(Pose2(0, 0, 0), Pose2(0, 0, 0))
        self.sim_time = 0.0
        self._last_measured: Optional[float] = None
        self._grid: Optional[OccupancyGrid] = None
        self._blocked = None
        self._metric_path = None
        self._target_pose: Optional[Pose2] = None
        self._path: Optional[TopologicalPath] = None
        self._agents_active = False

    # -- single map update ---------------------------------------------------

    def map_update(self):
        cfg = self.cfg
        scan = raycast_scan(self.world, self.robot.true_pose, cfg)
        sig = observe_signature(self.world, self.robot.true_pose, cfg)

        duration = None
        if self.duration_source is not None:
            duration = self.duration_source(
                self.system.update_count, len(self.system.local or ())
            )
        elif self.measured_time:
            duration = self._last_measured if self._last_measured is not None else 0.0

        t0 = time.perf_counter()
        res = self.system.update(
            self.robot.odom_pose, scan, sig, duration=duration, path=self._path
        )
        self._last_measured = time.perf_counter() - t0

        if res.node_id is not None:
            self.report.true_poses[res.node_id] = self.robot.true_pose.copy()
        self.report.loop_closure_total += 1 if res.loop_closure is not None else 0
        self.report.laser_proximity_total += res.laser_proximity_links
        self.report.visual_proximity_total += res.proximity_links - res.laser_proximity_links

        est = {}
        if self.system.local is not None:
            for nid in self.system.local.ids:
                if nid in self.system.graph.nodes:
                    est[nid] = self.system.graph.nodes[nid].opt_pose
        self.report.rows.append(
            UpdateRow(
                time=self.sim_time,
                wm_size=len(self.system.state.wm),
                ltm_size=len(self.system.state.ltm),
                update_ms=res.duration * 1000.0,
                loop_closures=1 if res.loop_closure is not None else 0,
                proximity_links=res.proximity_links,
                ate=ate_rmse(est, self.report.true_poses),
            )
        )

        # refresh the costmap and the metric plan toward the current target
        if self._path is not None and res.tpp is not None and res.tpp.status == "active":
            if res.tpp.target_pose is not None:
                self._target_pose = res.tpp.target_pose
            self._replan_metric()
        return res

    def _replan_metric(self) -> None:
        if self._target_pose is None or self.system.local is None:
            self._metric_path = None
            return
        grid = assemble_grid(self.system.graph, self.system.local, self.cfg.grid_resolution)
        blocked = inflate_blocked(grid, self.cfg.footprint_radius)
        self._grid = grid
        self._blocked = blocked
        # a badly displaced target can sit outside the assembled grid; plan
        # toward the nearest in-grid point instead
        margin = 3 * grid.resolution
        tp_plan = Pose2(
            min(max(self._target_pose.x, grid.origin.x + margin),
                grid.origin.x + grid.width * grid.resolution - margin),
            min(max(self._target_pose.y, grid.origin.y + margin),
                grid.origin.y + grid.height * grid.resolution - margin),
            self._target_pose.theta,
        )
        try:
            self._metric_path = plan_metric(
                grid, self.robot.odom_pose, tp_plan,
                self.cfg.footprint_radius, blocked=blocked,
            )
        except ValueError:
            self._metric_path = None
        if self._metric_path is None:
            # exact goal cell blocked or unreachable (often stale walls from
            # not-yet-corrected passes): accept any reachable cell near it
            tp = tp_plan
            for radius in (0.3, 0.6, 0.9, 1.2, 1.5):
                for k in range(8):
                    ang = k * math.pi / 4.0
                    cand = Pose2(tp.x + radius * math.cos(ang), tp.y + radius * math.sin(ang), tp.theta)
                    try:
                        path = plan_metric(
                            grid, self.robot.odom_pose, cand,
                            self.cfg.footprint_radius, blocked=blocked,
                        )
                    except ValueError:
                        path = None
                    if path is not None:
                        self._metric_path = path
                        break
                if self._metric_path is not None:
                    break
        if self._metric_path is None:
            # last resort: pursue the target directly, live obstacle
            # avoidance keeps it safe; stalling still fails the target
            self._metric_path = self._direct_path(self._target_pose)

    def _direct_path(self, target: Pose2) -> list[tuple[float, float]]:
        p = self.robot.odom_pose
        dist = math.hypot(target.x - p.x, target.y - p.y)
        n = max(int(dist / 0.2), 1)
        return [
            (p.x + (k / n) * (target.x - p.x), p.y + (k / n) * (target.y - p.y))
            for k in range(1, n + 1)
        ]

    # -- control ---------------------------------------------------------------

    def _live_obstacles(self) -> np.ndarray:
        cfg = self.cfg
        scan = raycast_scan(self.world, self.robot.true_pose, cfg)
        pts = scan.points()
        low = low_obstacle_points(self.world, self.robot.true_pose, cfg)
        if len(low):
            pts = np.vstack([pts, low]) if len(pts) else low
        if not len(pts):
            return np.zeros((0, 2))
        # sensor frame -> map frame through the odometry pose
        c, s = math.cos(self.robot.odom_pose.theta), math.sin(self.robot.odom_pose.theta)
        rot = np.array([[c, -s], [s, c]])
        return pts @ rot.T + np.array([self.robot.odom_pose.x, self.robot.odom_pose.y])

    def control_tick(self, cmd: Optional[VelocityCommand] = None) -> None:
        if cmd is None:
            if self._metric_path:
                # collision avoidance uses live sensor points only: the global
                # grid can lag the map corrections and carry phantom walls
                cmd = control_step(
                    self.robot.odom_pose, self._metric_path, self._live_obstacles(),
                    self.cfg,
                )
            else:
                cmd = VelocityCommand(0.0, 0.0)
        if self._agents_active:
            for agent in self.world.agents:
                agent.step(self.cfg.control_dt, self.cfg.agent_speed)
        step_robot(self.world, self.robot, cmd, self.cfg.control_dt, self.rng, self.cfg)
        self.sim_time += self.cfg.control_dt

    def run_updates(self, n: int, controller: Optional[Callable[[], VelocityCommand]] = None):
        """n map updates with control ticks in between."""
        per_update = max(int(round(self.cfg.a / self.cfg.control_dt)), 1)
        last = None
        for _ in range(n):
            for _ in range(per_update):
                self.control_tick(controller() if controller is not None else None)
            last = self.map_update()
        return last

    # -- driving helpers ------------------------------------------------------

    def _drive_towards(self, target: Pose2) -> VelocityCommand:
        """Ground-truth point chaser used for the teleoperated mapping phase."""
        p = self.robot.true_pose
        dx, dy = target.x - p.x, target.y - p.y
        herr = wrap_angle(math.atan2(dy, dx) - p.theta)
        omega = max(-self.cfg.omega_max, min(self.cfg.omega_max, 2.5 * herr))
        v = self.cfg.v_max if abs(herr) < 0.6 else 0.05
        return VelocityCommand(v, omega)

    def _drive_to_point(self, wp: Pose2) -> None:
        cfg = self.cfg
        per_update = max(int(round(cfg.a / cfg.control_dt)), 1)
        guard = 0
        while (
            math.hypot(wp.x - self.robot.true_pose.x, wp.y - self.robot.true_pose.y) > cfg.d
            and guard < cfg.max_updates
        ):
            for _ in range(per_update):
                self.control_tick(self._drive_towards(wp))
            self.map_update()
            guard += 1

    def teleop_to_waypoints(self) -> None:
        """Session-1 mapping drive; binds each waypoint to its nearest node."""
        for name, wp in self.world.waypoints:
            self._drive_to_point(wp)
            session_nodes = {
                nid: p for nid, p in self.report.true_poses.items()
                if nid in self.system.graph.nodes
                and self.system.graph.nodes[nid].session == self.system.session
            }
            if session_nodes:
                nearest = min(
                    session_nodes,
                    key=lambda nid: math.hypot(
                        session_nodes[nid].x - wp.x, session_nodes[nid].y - wp.y
                    ),
                )
                self.report.waypoint_nodes[name] = nearest
        if self.cfg.teleop_close and self.world.waypoints:
            # drive back to the first waypoint so the mapping lap closes the
            # loop before autonomous patrol starts
            self._drive_to_point(self.world.waypoints[0][1])

    def warmup_drive(self) -> None:
        """Short forward drive at session start so loop closures can anchor
        the new session to the old map."""
        updates = max(int(round(self.cfg.warmup_s / self.cfg.a)), 1)
        start = self.robot.true_pose
        ahead = Pose2(
            start.x + 100.0 * math.cos(start.theta),
            start.y + 100.0 * math.sin(start.theta),
            start.theta,
        )
        self.run_updates(updates, controller=lambda: self._drive_towards(ahead))

    # -- goals ------------------------------------------------------------------

    def navigate_to(self, name: str, goal_node: int) -> GoalOutcome:
        """Plan a topological path to the goal node and follow it."""
        cfg = self.cfg
        self.map_update()  # robot is stationary: plan on fresh data
        global_sub = self.system.build_global_map()
        path = plan_topological(global_sub, self.system.last_node_id, goal_node)
        session = self.system.session
        if path is None:
            return GoalOutcome(session, name, goal_node, "failed", math.inf)

        self._path = path
        self._target_pose = None
        self._metric_path = None
        per_update = max(int(round(cfg.a / cfg.control_dt)), 1)
        status = "failed"
        for _ in range(cfg.max_updates):
            for _ in range(per_update):
                self.control_tick()
            res = self.map_update()
            if res.tpp is None:
                continue
            if res.tpp.status == "goal_reached":
                status = "reached"
                break
            if res.tpp.status == "failed":
                status = "failed"
                break
        self._path = None
        self._metric_path = None
        self._target_pose = None

        goal_true = self.report.true_poses.get(goal_node)
        err = (
            math.hypot(
                goal_true.x - self.robot.true_pose.x, goal_true.y - self.robot.true_pose.y
            )
            if goal_true is not None
            else math.inf
        )
        outcome = GoalOutcome(session, name, goal_node, status, err)
        self.report.goals.append(outcome)
        return outcome

    # -- full scenario -----------------------------------------------------------

    def run(self) -> ScenarioReport:
        cfg = self.cfg
        for session in range(cfg.sessions):
            self.system.begin_session()
            start = Pose2(cfg.start_x, cfg.start_y, cfg.start_theta)
            self.robot = RobotState(start.copy(), start.copy())
            self._agents_active = False
            self.map_update()

            if session == 0 and self.world.waypoints:
                self.teleop_to_waypoints()
            else:
                self.warmup_drive()

            if cfg.patrol_cycles > 0 and self.report.waypoint_nodes:
                self._agents_active = True
                names = [name for name, _ in self.world.waypoints]
                patrol = Patrol(names)
                for _ in range(cfg.patrol_cycles * len(names)):
                    name = patrol.current()
                    outcome = self.navigate_to(name, self.report.waypoint_nodes[name])
                    patrol.advance("reached" if outcome.status == "reached" else "failed")
        return self.report


def run_scenario(
    world: World,
    cfg: Config,
    store_path: str | Path,
    duration_source: Optional[Callable[[int, int], float]] = None,
    measured_time: bool = False,
) -> tuple[SplamSystem, ScenarioReport]:
    runner = ScenarioRunner(world, cfg, store_path, duration_source, measured_time)
    report = runner.run()
    return runner.system, report
