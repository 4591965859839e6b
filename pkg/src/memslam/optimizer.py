"""Pose-graph optimization on SE(2): damped Gauss-Newton with the root
fixed at its current odometry pose, so every pose comes out in the frame of
the latest node."""

from __future__ import annotations

import math
from collections import deque

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .geometry import Pose2, apply, wrap_angle
from .pose_graph import Subgraph


def chain_initial_poses(sub: Subgraph, root_pose: Pose2) -> dict[int, Pose2]:
    """Initial guesses: stored snapshot poses where present, otherwise chained
    link transforms along a BFS spanning tree from the root."""
    poses: dict[int, Pose2] = {sub.root: root_pose.copy()}
    adj = sub.adjacency()
    queue = deque([sub.root])
    while queue:
        cur = queue.popleft()
        for link in sorted(adj[cur], key=lambda l: l.key()):
            nxt = link.other(cur)
            if nxt in poses:
                continue
            stored = sub.poses.get(nxt)
            poses[nxt] = stored.copy() if stored is not None else apply(
                poses[cur], link.transform_from(cur)
            )
            queue.append(nxt)
    if len(poses) != len(sub.ids):
        raise ValueError("subgraph is not connected; pass a local/global map component")
    return poses


class _Problem:
    """Vectorized residual/Jacobian evaluation over the link constraints."""

    def __init__(self, links, index: dict[int, int]):
        self.m = len(links)
        self.fi = np.array([index[l.from_id] for l in links], dtype=np.int64)
        self.ti = np.array([index[l.to_id] for l in links], dtype=np.int64)
        meas = np.array(
            [[l.transform.dx, l.transform.dy, l.transform.dtheta] for l in links]
        )
        self.mx, self.my, self.mth = meas[:, 0], meas[:, 1], meas[:, 2]
        self.cm, self.sm = np.cos(self.mth), np.sin(self.mth)

    def residuals(self, state: np.ndarray) -> np.ndarray:
        fi, ti = self.fi, self.ti
        xi, yi, thi = state[3 * fi], state[3 * fi + 1], state[3 * fi + 2]
        xj, yj, thj = state[3 * ti], state[3 * ti + 1], state[3 * ti + 2]
        ci, si = np.cos(thi), np.sin(thi)
        dx, dy = xj - xi, yj - yi
        rx = ci * dx + si * dy
        ry = -si * dx + ci * dy
        ex = self.cm * (rx - self.mx) + self.sm * (ry - self.my)
        ey = -self.sm * (rx - self.mx) + self.cm * (ry - self.my)
        eth = thj - thi - self.mth
        eth = np.arctan2(np.sin(eth), np.cos(eth))
        return np.column_stack((ex, ey, eth)).ravel()

    def jacobian(self, state: np.ndarray, fixed: int) -> sp.csr_matrix:
        m = self.m
        fi, ti = self.fi, self.ti
        xi, yi, thi = state[3 * fi], state[3 * fi + 1], state[3 * fi + 2]
        xj, yj = state[3 * ti], state[3 * ti + 1]
        dx, dy = xj - xi, yj - yi
        ci, si = np.cos(thi), np.sin(thi)
        # Rm^T Ri^T = R(-(theta_i + theta_m))
        c2 = self.cm * ci - self.sm * si
        s2 = self.cm * si + self.sm * ci
        # Rm^T (dRi^T/dtheta) (t_j - t_i)
        v0 = -si * dx + ci * dy
        v1 = -ci * dx - si * dy
        u0 = self.cm * v0 + self.sm * v1
        u1 = -self.sm * v0 + self.cm * v1

        k = np.arange(m)
        r0, r1, r2 = 3 * k, 3 * k + 1, 3 * k + 2
        rows, cols, vals = [], [], []

        def add(row, node_idx, offset, val):
            rows.append(row)
            cols.append(3 * node_idx + offset)
            vals.append(val)

        # translation rows, from-node block: -[ [c2, s2], [-s2, c2] ], dtheta col
        add(r0, fi, 0, -c2); add(r0, fi, 1, -s2); add(r0, fi, 2, u0)
        add(r1, fi, 0, s2);  add(r1, fi, 1, -c2); add(r1, fi, 2, u1)
        # translation rows, to-node block: +[ [c2, s2], [-s2, c2] ]
        add(r0, ti, 0, c2);  add(r0, ti, 1, s2)
        add(r1, ti, 0, -s2); add(r1, ti, 1, c2)
        # angle row
        add(r2, fi, 2, -np.ones(m))
        add(r2, ti, 2, np.ones(m))

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        keep = (cols // 3) != fixed
        n = len(state)
        return sp.csr_matrix(
            (vals[keep], (rows[keep], cols[keep])), shape=(3 * m, n)
        )


def optimize(
    sub: Subgraph,
    root: int,
    root_pose: Pose2,
    max_iter: int = 30,
    tol: float = 1e-8,
    lambda0: float = 1e-3,
) -> dict[int, Pose2]:
    """Minimize the summed squared link errors with the root pose fixed.

    Deterministic for a given subgraph; the returned root pose is the exact
    object passed in. Raises on a disconnected subgraph.
    """
    if root not in sub.ids:
        raise ValueError(f"root {root} not in subgraph")
    init = chain_initial_poses(sub, root_pose)
    ids = sorted(sub.ids)
    index = {nid: k for k, nid in enumerate(ids)}
    links = list(sub.links)

    state = np.zeros(3 * len(ids))
    for nid, k in index.items():
        p = init[nid]
        state[3 * k : 3 * k + 3] = (p.x, p.y, p.theta)

    if len(ids) > 1 and links:
        problem = _Problem(links, index)
        fixed = index[root]
        fb = 3 * fixed
        lam = lambda0
        res = problem.residuals(state)
        cost = float(res @ res)
        for _ in range(max_iter):
            jac = problem.jacobian(state, fixed)
            grad = jac.T @ res
            grad[fb : fb + 3] = 0.0
            if np.abs(grad).max() < tol:
                break
            h = (jac.T @ jac).tocsr()
            anchor = sp.csr_matrix(
                (np.ones(3), (range(fb, fb + 3), range(fb, fb + 3))),
                shape=h.shape,
            )
            damped = h + anchor + lam * sp.identity(h.shape[0], format="csr")
            try:
                delta = spsolve(damped, -grad)
            except RuntimeError:
                break
            trial = state + delta
            trial[2::3] = np.arctan2(np.sin(trial[2::3]), np.cos(trial[2::3]))
            trial[fb : fb + 3] = state[fb : fb + 3]
            trial_res = problem.residuals(trial)
            trial_cost = float(trial_res @ trial_res)
            if trial_cost < cost:
                state, res, cost = trial, trial_res, trial_cost
                lam = max(lam / 10.0, 1e-12)
            else:
                lam *= 10.0
                if lam > 1e10:
                    break

    out: dict[int, Pose2] = {}
    for nid, k in index.items():
        if nid == root:
            out[nid] = root_pose
        else:
            out[nid] = Pose2(state[3 * k], state[3 * k + 1], state[3 * k + 2])
    return out


def link_residual(pose_from: Pose2, pose_to: Pose2, transform) -> float:
    """Euclidean mismatch of a link constraint under the given poses."""
    predicted = apply(pose_from, transform)
    dth = wrap_angle(predicted.theta - pose_to.theta)
    return math.hypot(predicted.x - pose_to.x, predicted.y - pose_to.y) + abs(dth)
