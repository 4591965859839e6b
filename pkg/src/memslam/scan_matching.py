"""2D ICP and proximity detection.

Proximity links recover odometry corrections where appearance matching
cannot: scans cover a wide field of view, so they still align when an area
is re-entered from the opposite direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .config import Config
from .geometry import Pose2, Transform2, compose, inverse, pose_as_transform, wrap_angle
from .pose_graph import LinkType, PoseGraph, Subgraph
from .scan import transform_points


@dataclass
class ProximityLink:
    from_id: int
    to_id: int
    transform: Transform2
    visual: bool


@dataclass
class ProximityResult:
    links: list[ProximityLink] = field(default_factory=list)


def rigid_fit(src: np.ndarray, dst: np.ndarray) -> Transform2:
    """Least-squares rigid transform T with T(src) ~= dst (SVD, no scale)."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    h = (src - mu_s).T @ (dst - mu_d)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, d]) @ u.T
    theta = math.atan2(rot[1, 0], rot[0, 0])
    t = mu_d - rot @ mu_s
    return Transform2(float(t[0]), float(t[1]), theta)


def _collinear(points: np.ndarray) -> bool:
    if len(points) < 3:
        return True
    centered = points - points.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    return svals[-1] <= 1e-9 * max(svals[0], 1.0)


def _icp_iterate(
    ref: np.ndarray, new: np.ndarray, init: Transform2, cfg: Config
) -> tuple[Transform2, float, float]:
    """Run the ICP loop from one starting transform.

    Returns (transform, inlier_ratio, mean matched residual).
    """
    t = Transform2(init.dx, init.dy, init.dtheta)
    prev_mean = None
    for _ in range(cfg.icp_max_iter):
        moved = transform_points(new, t.dx, t.dy, t.dtheta)
        idx, dist = kernels.nearest_neighbors(ref, moved)
        mask = dist < cfg.icp_match_dist
        if mask.sum() < 2:
            break
        delta = rigid_fit(moved[mask], ref[idx[mask]])
        t = compose(delta, t)
        mean_resid = float(dist[mask].mean())
        if prev_mean is not None and abs(prev_mean - mean_resid) < cfg.icp_tol:
            break
        prev_mean = mean_resid

    moved = transform_points(new, t.dx, t.dy, t.dtheta)
    _, dist = kernels.nearest_neighbors(ref, moved)
    ratio = float((dist < cfg.icp_inlier_dist).sum()) / len(new)
    matched = dist[dist < cfg.icp_match_dist]
    mean_final = float(matched.mean()) if len(matched) else math.inf
    return t, ratio, mean_final


def icp2d(
    ref_points: np.ndarray,
    new_points: np.ndarray,
    init: Transform2,
    cfg: Config,
    search: str = "exact",
) -> Optional[tuple[Transform2, float]]:
    """Point-to-point ICP aligning new_points onto ref_points.

    Returns (transform, ratio) where ratio is the fraction of new points
    whose final residual is below the inlier distance; None when the ratio
    misses the acceptance threshold or the geometry leaves the rotation
    unobservable (collinear input).

    A poor initial guess can settle into aliased local minima, so a coarse
    deterministic search over rotation/translation candidates around the
    initial guess can re-seed the iteration. `search` picks the policy:
      "off"    never search (trusted initial guesses: odometry, word fits)
      "rescue" search only when the plain pass fails the acceptance ratio
      "exact"  search whenever the plain pass does not land near-exactly
    """
    ref = np.asarray(ref_points, dtype=np.float64)
    new = np.asarray(new_points, dtype=np.float64)
    if len(ref) == 0 or len(new) == 0:
        raise ValueError("icp2d requires non-empty point sets")
    if _collinear(ref) or _collinear(new):
        return None

    t, ratio, mean_final = _icp_iterate(ref, new, init, cfg)
    retry = (search == "exact" and mean_final > cfg.icp_search_trigger) or (
        search == "rescue" and ratio < cfg.c
    )
    if retry:
        cand = _correlative_search(ref, new, init, cfg)
        t2, ratio2, mean2 = _icp_iterate(ref, new, cand, cfg)
        if (ratio2, -mean2) > (ratio, -mean_final):
            t, ratio = t2, ratio2

    if ratio >= cfg.c:
        return t, ratio
    return None


def _correlative_search(
    ref: np.ndarray, new: np.ndarray, init: Transform2, cfg: Config
) -> Transform2:
    """Coarse-to-fine grid search over transforms around the initial guess.

    Each candidate costs one correspondence query (mean gated NN distance);
    levels shrink the grid around the running best until the step is finer
    than the beam sampling, leaving ICP a start inside the exact basin.
    """
    sample = new[:: max(len(new) // 80, 1)]
    center = Transform2(init.dx, init.dy, init.dtheta)
    rot_span = math.radians(cfg.icp_search_rot)
    rot_step = math.radians(cfg.icp_search_rot_step)
    t_span = cfg.icp_search_trans
    t_step = cfg.icp_search_trans_step

    for _ in range(cfg.icp_search_levels):
        best = (math.inf, 0, center)
        k = 0
        for rot in np.arange(-rot_span, rot_span + 1e-12, rot_step):
            rotated = compose(center, Transform2(0.0, 0.0, float(rot)))
            for tx in np.arange(-t_span, t_span + 1e-12, t_step):
                for ty in np.arange(-t_span, t_span + 1e-12, t_step):
                    cand = compose(Transform2(float(tx), float(ty), 0.0), rotated)
                    moved = transform_points(sample, cand.dx, cand.dy, cand.dtheta)
                    _, dist = kernels.nearest_neighbors(ref, moved)
                    score = float(np.minimum(dist, cfg.icp_match_dist).mean())
                    if (score, k) < best[:2]:
                        best = (score, k, cand)
                    k += 1
        center = best[2]
        rot_span, rot_step = rot_step, rot_step / 3.0
        t_span, t_step = t_step, t_step / 3.0
    return center


def merge_scans(nodes, poses) -> np.ndarray:
    """Union of the nodes' scan points expressed in the common (map) frame."""
    if len(nodes) != len(poses) or not nodes:
        raise ValueError("need equally many nodes and poses, at least one")
    chunks = []
    for node, pose in zip(nodes, poses):
        pts = node.scan.points()
        if len(pts):
            chunks.append(transform_points(pts, pose.x, pose.y, pose.theta))
    if not chunks:
        return np.zeros((0, 2))
    return np.vstack(chunks)


def _segment_groups(candidates: list[int], g: PoseGraph) -> list[list[int]]:
    """Split candidate ids into components connected by neighbor links only."""
    remaining = set(candidates)
    groups = []
    for start in candidates:
        if start not in remaining:
            continue
        comp = [start]
        remaining.discard(start)
        queue = [start]
        while queue:
            cur = queue.pop()
            for link in g.links_of(cur):
                if link.link_type != LinkType.NEIGHBOR:
                    continue
                nxt = link.other(cur)
                if nxt in remaining:
                    remaining.discard(nxt)
                    comp.append(nxt)
                    queue.append(nxt)
        groups.append(sorted(comp))
    return groups


def _thin_recent(ids: list[int], poses: dict[int, Pose2], radius: float) -> list[int]:
    """Keep only the most recent node among those within `radius` of a kept one."""
    kept: list[int] = []
    for nid in sorted(ids, reverse=True):
        p = poses[nid]
        if all(math.hypot(p.x - poses[k].x, p.y - poses[k].y) > radius for k in kept):
            kept.append(nid)
    return sorted(kept)


def proximity_detect(
    g: PoseGraph,
    local: Subgraph,
    new_id: int,
    stm_ids,
    loop_closed_with: set[int],
    cfg: Config,
    visual_estimator: Optional[Callable] = None,
) -> ProximityResult:
    """Find proximity links between the new node and nearby local-map groups.

    Candidates are local-map nodes within radius r of the robot, STM
    excluded. Each neighbor-link-connected group whose nearest node lies
    within radius l (and has no fresh loop closure with the new node) gets:
    step 1, a visual transform estimate against its nearest node; step 2 on
    failure, ICP of the new scan against the group's merged scans.
    """
    result = ProximityResult()
    new_node = g.nodes[new_id]
    robot = local.poses.get(new_id, new_node.opt_pose)
    stm = set(stm_ids)

    candidates = []
    for nid in sorted(local.ids):
        if nid == new_id or nid in stm or nid not in local.poses:
            continue
        p = local.poses[nid]
        if math.hypot(p.x - robot.x, p.y - robot.y) <= cfg.r:
            candidates.append(nid)
    if not candidates:
        return result

    for group in _segment_groups(candidates, g):
        nearest = min(
            group,
            key=lambda nid: (
                math.hypot(local.poses[nid].x - robot.x, local.poses[nid].y - robot.y),
                nid,
            ),
        )
        np_ = local.poses[nearest]
        if math.hypot(np_.x - robot.x, np_.y - robot.y) > cfg.l:
            continue
        if nearest in loop_closed_with:
            continue

        # step 1: word-based estimate against the nearest node
        if visual_estimator is not None:
            t = visual_estimator(g.nodes[nearest], new_node)
            if t is not None:
                result.links.append(
                    ProximityLink(new_id, nearest, inverse(t), visual=True)
                )
                continue

        # step 2: align the new scan against the group's merged scans
        new_pts = new_node.scan.points()
        if not len(new_pts):
            continue
        kept = _thin_recent(group, local.poses, cfg.l)
        merged = merge_scans([g.nodes[k] for k in kept], [local.poses[k] for k in kept])
        if not len(merged):
            continue
        # no basin search here: against merged multi-node scans the inlier
        # ratio cannot distinguish a slid alignment in self-similar
        # corridors, so a searched "rescue" can mint confident wrong links.
        # The plain pass either converges from the optimized-pose guess or
        # fails the ratio and the group is skipped.
        fit = icp2d(merged, new_pts, pose_as_transform(robot), cfg, search="off")
        if fit is None:
            continue
        corrected, _ = fit
        # a correction beyond plausible drift means the alignment wandered;
        # such a link would inject its full error into the graph
        if (
            math.hypot(corrected.dx - robot.x, corrected.dy - robot.y) > cfg.prox_max_correction
            or abs(wrap_angle(corrected.dtheta - robot.theta))
            > math.radians(cfg.prox_max_rotation_deg)
        ):
            continue
        t_link = compose(inverse(corrected), pose_as_transform(np_))
        result.links.append(ProximityLink(new_id, nearest, t_link, visual=False))

    return result
