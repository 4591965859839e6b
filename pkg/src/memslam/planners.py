"""Topological planning over the global map and path following.

The Dijkstra edge cost is angular: traversing a link costs the absolute
heading mismatch between the stored node orientation and the direction of
travel (plus a small distance tie-break), so paths recorded in the same
driving direction win over geometrically shorter ones.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

from .config import Config
from .geometry import Pose2, wrap_angle
from .pose_graph import LinkType, Subgraph

EDGE_EPS = 0.01  # rad per meter distance tie-break


def edge_cost(p_from: Pose2, p_to: Pose2) -> float:
    dx = p_to.x - p_from.x
    dy = p_to.y - p_from.y
    dist = math.hypot(dx, dy)
    if dist < 1e-6:
        return EDGE_EPS * dist
    heading = math.atan2(dy, dx)
    return abs(wrap_angle(heading - p_from.theta)) + EDGE_EPS * dist


@dataclass
class TopologicalPath:
    node_ids: list[int]
    poses: dict[int, Pose2]
    goal: int
    cursor: int = 0          # index of the latest reached node
    stall_count: int = 0
    last_target: Optional[int] = None
    last_target_dist: float = math.inf
    last_target_pose: Optional[Pose2] = None
    last_goal_pose: Optional[Pose2] = None
    unreachable: set[int] = field(default_factory=set)
    cost: float = 0.0

    def upcoming(self) -> list[int]:
        return self.node_ids[self.cursor + 1 :]


def plan_topological(global_map: Subgraph, start: int, goal: int) -> Optional[TopologicalPath]:
    """Angular-cost Dijkstra from start to goal over the global map."""
    if start not in global_map.ids or goal not in global_map.ids:
        return None
    poses = global_map.poses
    adj = global_map.adjacency()

    dist: dict[int, float] = {start: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, start)]
    visited: set[int] = set()
    while heap:
        d, cur = heapq.heappop(heap)
        if cur in visited:
            continue
        visited.add(cur)
        if cur == goal:
            break
        for link in sorted(adj[cur], key=lambda l: l.key()):
            nxt = link.other(cur)
            if nxt in visited or cur not in poses or nxt not in poses:
                continue
            nd = d + edge_cost(poses[cur], poses[nxt])
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                prev[nxt] = cur
                heapq.heappush(heap, (nd, nxt))

    if goal not in dist:
        return None
    order = [goal]
    while order[-1] != start:
        order.append(prev[order[-1]])
    order.reverse()
    return TopologicalPath(
        node_ids=order,
        poses={nid: poses[nid].copy() for nid in order},
        goal=goal,
        cost=dist[goal],
    )


@dataclass
class TppOutcome:
    status: str  # "active", "goal_reached", "failed"
    target: Optional[int] = None
    target_pose: Optional[Pose2] = None
    retrieval_ids: list[int] = field(default_factory=list)
    temporary_link: Optional[tuple[int, int]] = None


def tpp_step(
    path: TopologicalPath,
    local: Subgraph,
    robot: Pose2,
    current_node: int,
    linked_to_path: bool,
    cfg: Config,
) -> TppOutcome:
    """One planner iteration while following a topological path.

    Picks the farthest reachable path node in the local map as the metric
    target, requests LTM retrieval of upcoming nodes within sensor radius,
    and keeps the path tied to the current node with a temporary link when
    no real link appeared this update. Stalling on one target for f updates
    marks it unreachable; running out of upcoming targets fails the goal.
    """
    poses = {nid: local.poses.get(nid, path.poses[nid]) for nid in path.node_ids}

    # cursor: farthest path node already passed
    for k in range(len(path.node_ids) - 1, path.cursor, -1):
        p = poses[path.node_ids[k]]
        if math.hypot(p.x - robot.x, p.y - robot.y) <= cfg.d:
            path.cursor = max(path.cursor, k)
            break

    goal_pose = poses[path.goal]
    goal_dist = math.hypot(goal_pose.x - robot.x, goal_pose.y - robot.y)
    for link in local.links:
        # a fresh verified link straight to the goal node beats the smoothed
        # map poses for judging arrival
        if link.link_type in (LinkType.LOOP_CLOSURE, LinkType.PROXIMITY) and {
            link.from_id, link.to_id
        } == {current_node, path.goal}:
            t = link.transform
            goal_dist = math.hypot(t.dx, t.dy)
    if goal_dist <= cfg.d:
        return TppOutcome(status="goal_reached")

    # optimization moved the map under the plan: stall evidence and
    # unreachable marks refer to outdated poses, start that bookkeeping over
    if path.last_goal_pose is not None:
        jump = math.hypot(
            goal_pose.x - path.last_goal_pose.x, goal_pose.y - path.last_goal_pose.y
        )
        if jump > 0.3:
            path.unreachable.clear()
            path.stall_count = 0
            path.last_target = None
    path.last_goal_pose = goal_pose.copy()

    upcoming = path.upcoming()
    if not upcoming:
        # adjacent to goal already; fall back to driving at the goal node
        upcoming = [path.goal]

    retrieval = []
    for nid in upcoming:
        p = poses[nid]
        if math.hypot(p.x - robot.x, p.y - robot.y) <= cfg.r:
            retrieval.append(nid)
        else:
            break

    target = None
    for nid in reversed(upcoming):
        if nid in local.ids and nid not in path.unreachable:
            target = nid
            break
    if target is None:
        if all(nid in path.unreachable for nid in upcoming):
            return TppOutcome(status="failed", retrieval_ids=retrieval)
        # nothing from the path is in the local map: wait for retrievals to
        # extend it, but not forever (blocked retrieval counts as stalled)
        path.stall_count += 1
        if path.stall_count >= cfg.f:
            return TppOutcome(status="failed", retrieval_ids=retrieval)
        return TppOutcome(status="active", retrieval_ids=retrieval)

    tp = poses[target]
    target_dist = math.hypot(tp.x - robot.x, tp.y - robot.y)
    if target == path.last_target and path.last_target_pose is not None:
        moved = math.hypot(
            tp.x - path.last_target_pose.x, tp.y - path.last_target_pose.y
        )
        if moved > 0.3:
            path.stall_count = 0  # the target itself moved: re-dispatch
            path.last_target_dist = target_dist
        elif target_dist < path.last_target_dist - 0.02:
            path.stall_count = 0  # approaching the target is progress
            path.last_target_dist = target_dist
        else:
            path.stall_count += 1
        if path.stall_count >= cfg.f:
            path.unreachable.add(target)
            path.stall_count = 0
            remaining = [
                nid for nid in upcoming
                if nid in local.ids and nid not in path.unreachable
            ]
            if not remaining:
                return TppOutcome(status="failed", retrieval_ids=retrieval)
            target = remaining[-1]
            path.last_target = target
            tp = poses[target]
            path.last_target_dist = math.hypot(tp.x - robot.x, tp.y - robot.y)
    else:
        path.last_target = target
        path.last_target_dist = target_dist
        path.stall_count = 0
    path.last_target_pose = tp.copy()

    temp = None
    if not linked_to_path:
        in_local = [nid for nid in path.node_ids if nid in local.ids and nid != current_node]
        if in_local:
            closest = min(
                in_local,
                key=lambda nid: (
                    math.hypot(poses[nid].x - robot.x, poses[nid].y - robot.y),
                    nid,
                ),
            )
            temp = (current_node, closest)

    return TppOutcome(
        status="active",
        target=target,
        target_pose=poses[target].copy(),
        retrieval_ids=retrieval,
        temporary_link=temp,
    )


def patrol_step(waypoints: list[int], current_index: int, status: str) -> int:
    """Next waypoint index after a goal completed or failed; wraps around."""
    if not waypoints:
        raise ValueError("patrol needs at least one waypoint")
    if status not in ("reached", "failed"):
        raise ValueError(f"unknown patrol status {status!r}")
    return (current_index + 1) % len(waypoints)


class Patrol:
    """Cycles through waypoint node ids, advancing on reached or failed."""

    def __init__(self, waypoints: list[int]):
        if not waypoints:
            raise ValueError("patrol needs at least one waypoint")
        self.waypoints = list(waypoints)
        self.index = 0

    def current(self) -> int:
        return self.waypoints[self.index]

    def advance(self, status: str) -> int:
        self.index = patrol_step(self.waypoints, self.index, status)
        return self.current()
