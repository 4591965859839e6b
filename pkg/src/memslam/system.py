"""The per-update SLAM pipeline: node assembly into STM, appearance loop
closure, proximity detection, optimization rooted at the newest node, path
upkeep, and the end-of-update memory budget."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import memory as mem
from .appearance import (
    Posterior,
    bayes_update,
    estimate_transform_visual,
    likelihood,
    on_loop_closure,
)
from .config import Config
from .geometry import Pose2, apply, transform_between
from .ltm_store import LtmStore
from .optimizer import optimize
from .planners import TopologicalPath, TppOutcome, tpp_step
from .pose_graph import (
    Link,
    LinkType,
    Node,
    PoseGraph,
    Subgraph,
    global_map,
    local_map,
)
from .scan import LaserScan
from .scan_matching import proximity_detect
from .signature import Signature


@dataclass
class UpdateResult:
    node_id: Optional[int]
    disposition: mem.Disposition
    loop_closure: Optional[int] = None
    proximity_links: int = 0
    laser_proximity_links: int = 0
    retrieved: list[int] = field(default_factory=list)
    transferred: int = 0
    local_ids: frozenset[int] = frozenset()
    duration: float = 0.0
    tpp: Optional[TppOutcome] = None


class SplamSystem:
    """Single-writer SLAM core. One instance spans all mapping sessions."""

    def __init__(self, cfg: Config, store_path: str | Path):
        self.cfg = cfg
        self.graph = PoseGraph()
        self.state = mem.MemoryState()
        self.store = LtmStore(store_path, scan_max_range=cfg.r, scan_fov=cfg.laser_fov)
        self.posterior = Posterior()
        self.session = -1
        self.next_id = 0
        self.prev_node_id: Optional[int] = None
        self.last_node_id: Optional[int] = None
        self.update_count = 0
        self._rng = np.random.default_rng(cfg.seed ^ 0x5EED)
        self._temp_link: Optional[tuple[int, int]] = None
        self._local: Optional[Subgraph] = None

    # -- sessions -----------------------------------------------------------

    def begin_session(self) -> int:
        """Start a new mapping session: odometry frame resets, WM/LTM persist.

        The STM queue is flushed into WM (with reduction checks) so stale
        chains from the previous session do not occupy the queue.
        """
        while self.state.stm:
            mem.demote_oldest(self.state, self.graph, self.cfg)
        self.session += 1
        self.prev_node_id = None
        self.clear_path_links()
        return self.session

    # -- main update --------------------------------------------------------

    def update(
        self,
        odom_pose: Pose2,
        scan: LaserScan,
        signature: Signature,
        duration: Optional[float] = None,
        path: Optional[TopologicalPath] = None,
    ) -> UpdateResult:
        if self.session < 0:
            raise RuntimeError("call begin_session() before update()")
        cfg = self.cfg
        node = Node(
            id=self.next_id,
            session=self.session,
            weight=0,
            odom_pose=odom_pose.copy(),
            opt_pose=odom_pose.copy(),
            signature=signature,
            scan=scan,
        )
        disposition = mem.stm_insert(self.state, self.graph, node, self.prev_node_id, cfg)
        self.update_count += 1

        if disposition == mem.Disposition.DELETED_NOT_MOVING:
            result = UpdateResult(None, disposition)
            if self.last_node_id is not None:
                result = self._navigate_and_budget(
                    result, self.last_node_id, odom_pose, duration, path
                )
            return result

        self.next_id += 1
        self.prev_node_id = node.id
        self.last_node_id = node.id

        # seed the optimized pose by chaining from the predecessor's frame
        for link in self.graph.links_of(node.id):
            if link.link_type == LinkType.NEIGHBOR and not link.merged:
                other = self.graph.nodes[link.other(node.id)]
                if other.opt_epoch == self.session:
                    node.opt_pose = apply(other.opt_pose, link.transform_from(other.id))
        node.opt_epoch = self.session

        result = UpdateResult(node.id, disposition)
        loop_closed: set[int] = set()

        # appearance-based loop closure over WM (STM stays out of the search)
        wm_order = sorted(i for i in self.state.wm if i in self.graph.nodes)
        lam = likelihood(signature, {i: self.graph.nodes[i].signature for i in wm_order})
        self.posterior, detected = bayes_update(
            self.posterior, lam, wm_order, self.graph, cfg.h,
            leak=cfg.bayes_leak, new_keep=cfg.bayes_new_keep,
        )
        if detected is not None and detected != node.id:
            t = estimate_transform_visual(self.graph.nodes[detected], node, cfg, self._rng)
            if t is not None:
                on_loop_closure(self.graph, node.id, detected, t)
                loop_closed.add(detected)
                result.loop_closure = detected
                ltm_neighbors = sorted(
                    link.other(detected)
                    for link in self.store.links_of(detected)
                    if link.other(detected) in self.state.ltm
                )
                result.retrieved += mem.retrieve(
                    self.state, self.graph, self.store, ltm_neighbors, cfg
                )

        resident = self.state.resident_ids()
        local = local_map(self.graph, node.id, resident, session=self.session)

        if loop_closed or result.retrieved:
            # a fresh loop closure (or retrieval) can move the map a lot;
            # give proximity detection corrected poses to reason about
            poses = optimize(
                local, node.id, node.odom_pose,
                max_iter=cfg.opt_max_iter, tol=cfg.opt_tol, lambda0=cfg.opt_lambda0,
            )
            for nid, pose in poses.items():
                n = self.graph.nodes[nid]
                n.opt_pose = pose.copy()
                n.opt_epoch = self.session
            local = Subgraph(
                root=local.root, ids=local.ids, links=local.links,
                poses={nid: pose.copy() for nid, pose in poses.items()},
            )

        if cfg.enable_proximity and len(scan):
            prox = proximity_detect(
                self.graph, local, node.id, self.state.stm, loop_closed, cfg,
                visual_estimator=lambda a, b: estimate_transform_visual(
                    a, b, cfg, self._rng
                ),
            )
            for plink in prox.links:
                self.graph.add_link(
                    Link(
                        plink.from_id, plink.to_id, LinkType.PROXIMITY,
                        plink.transform, visual=plink.visual,
                    )
                )
                result.proximity_links += 1
                if not plink.visual:
                    result.laser_proximity_links += 1
                loop_closed.add(plink.to_id)

        # optimize the local map rooted at the newest node
        local = local_map(self.graph, node.id, self.state.resident_ids(), session=self.session)
        poses = optimize(
            local, node.id, node.odom_pose,
            max_iter=cfg.opt_max_iter, tol=cfg.opt_tol, lambda0=cfg.opt_lambda0,
        )
        for nid, pose in poses.items():
            n = self.graph.nodes[nid]
            n.opt_pose = pose.copy()
            n.opt_epoch = self.session
        local = Subgraph(
            root=local.root, ids=local.ids, links=local.links,
            poses={nid: pose.copy() for nid, pose in poses.items()},
        )

        linked = path is not None and any(p in path.node_ids for p in loop_closed)
        return self._navigate_and_budget(
            result, node.id, odom_pose, duration, path, local=local, linked=linked
        )

    # -- planner upkeep and budget -------------------------------------------

    def _navigate_and_budget(
        self,
        result: UpdateResult,
        anchor_id: int,
        robot: Pose2,
        duration: Optional[float],
        path: Optional[TopologicalPath],
        local: Optional[Subgraph] = None,
        linked: bool = False,
    ) -> UpdateResult:
        cfg = self.cfg
        if local is None:
            local = local_map(
                self.graph, anchor_id, self.state.resident_ids(), session=self.session
            )
        self._local = local
        result.local_ids = local.ids

        if path is not None:
            outcome = tpp_step(path, local, robot, anchor_id, linked, cfg)
            result.tpp = outcome
            if outcome.status == "active":
                result.retrieved += mem.retrieve(
                    self.state, self.graph, self.store,
                    [i for i in outcome.retrieval_ids if i in self.state.ltm],
                    cfg,
                )
                upcoming = path.upcoming() or [path.goal]
                poses = {nid: local.poses.get(nid, path.poses[nid]) for nid in upcoming}
                mem.immunize(self.state, upcoming, poses, robot, cfg)
                self._apply_temp_link(outcome, anchor_id)
            else:
                self.clear_path_links()
                self.state.immune = set()

        if duration is None:
            duration = cfg.dur_base + cfg.dur_per_node * len(local)
        result.duration = duration
        pinned = set(self._temp_link) if self._temp_link else None
        result.transferred = mem.enforce_budget(
            self.state, self.graph, self.store, duration, cfg,
            current=anchor_id, extra_pinned=pinned,
        )
        return result

    def _apply_temp_link(self, outcome: TppOutcome, anchor_id: int) -> None:
        want = outcome.temporary_link
        if want is None:
            self.clear_path_links()
            return
        if self._temp_link == want:
            return
        self.clear_path_links()
        a, b = want
        if a in self.graph.nodes and b in self.graph.nodes and a != b:
            t = transform_between(self.graph.nodes[a].opt_pose, self.graph.nodes[b].opt_pose)
            self.graph.add_link(Link(a, b, LinkType.TEMPORARY, t))
            self._temp_link = want

    def clear_path_links(self) -> None:
        if self._temp_link is not None:
            a, b = self._temp_link
            self.graph.remove_link(a, b, LinkType.TEMPORARY)
            self._temp_link = None

    # -- views ----------------------------------------------------------------

    @property
    def local(self) -> Optional[Subgraph]:
        return self._local

    def build_global_map(self) -> Subgraph:
        if self.last_node_id is None:
            raise RuntimeError("no nodes yet")
        return global_map(self.graph, self.last_node_id, self.state.ltm, self.store)

    def flush_to_store(self) -> None:
        """Write all resident nodes and links into the store (end of run)."""
        for nid in sorted(self.graph.nodes):
            self.store.put_node(self.graph.nodes[nid])
        for link in self.graph.all_links():
            if link.link_type != LinkType.TEMPORARY:
                self.store.put_link(link)

    def total_nodes(self) -> int:
        return len(self.graph.nodes) + len(self.state.ltm)

    def total_links(self) -> int:
        keys = {l.key() for l in self.graph.all_links()}
        keys.update(l.key() for l in self.store.all_links())
        return len(keys)
