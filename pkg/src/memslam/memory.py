"""Memory lifecycle: STM -> WM -> LTM transfers under a time budget,
planner immunity, capped retrieval, and graph reduction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .config import Config
from .geometry import Pose2, compose, inverse, transform_between
from .ltm_store import LtmStore
from .pose_graph import Link, LinkType, Node, PoseGraph
from .scan_matching import icp2d
from .signature import similarity

log = logging.getLogger(__name__)


class Disposition(Enum):
    ADDED = "added"
    DELETED_NOT_MOVING = "deleted_not_moving"


@dataclass
class ReduceOutcome:
    reduced: bool
    links_added: int = 0
    links_removed: int = 0


@dataclass
class MemoryState:
    """Partition of all node ids into STM queue, WM set, and LTM set."""

    stm: list[int] = field(default_factory=list)
    wm: set[int] = field(default_factory=set)
    ltm: set[int] = field(default_factory=set)
    immune: set[int] = field(default_factory=set)
    retrieved_this_update: int = 0

    def resident_ids(self) -> set[int]:
        return self.wm | set(self.stm)

    def check_partition(self) -> None:
        stm = set(self.stm)
        assert not (stm & self.wm), "STM and WM overlap"
        assert not (stm & self.ltm), "STM and LTM overlap"
        assert not (self.wm & self.ltm), "WM and LTM overlap"


def stm_insert(
    state: MemoryState,
    g: PoseGraph,
    new_node: Node,
    prev_id: Optional[int],
    cfg: Config,
) -> Disposition:
    """Insert a freshly assembled node into STM.

    Stationary duplicates are discarded. Otherwise the node is linked to its
    predecessor with the odometry delta (ICP-refined when the correspondence
    ratio allows), the predecessor's weight is bumped on signature
    similarity, and an STM overflow pushes the oldest node into WM (running
    the reduction check there).
    """
    prev = g.nodes[prev_id] if prev_id is not None else None
    if prev is not None:
        dp = new_node.odom_pose
        pp = prev.odom_pose
        if (
            abs(dp.x - pp.x) < 1e-6
            and abs(dp.y - pp.y) < 1e-6
            and abs(dp.theta - pp.theta) < 1e-6
        ):
            return Disposition.DELETED_NOT_MOVING

    g.add_node(new_node)
    if prev is not None:
        delta = transform_between(prev.odom_pose, new_node.odom_pose)
        ref = prev.scan.points()
        new_pts = new_node.scan.points()
        if len(ref) and len(new_pts):
            # odometry between consecutive nodes is a trusted guess
            refined = icp2d(ref, new_pts, delta, cfg, search="off")
            if refined is not None:
                delta = refined[0]
        g.add_link(Link(prev.id, new_node.id, LinkType.NEIGHBOR, delta))
        if similarity(prev.signature, new_node.signature) >= cfg.y:
            prev.weight += 1

    state.stm.append(new_node.id)
    if len(state.stm) > cfg.s:
        demote_oldest(state, g, cfg)
    return Disposition.ADDED


def demote_oldest(state: MemoryState, g: PoseGraph, cfg: Config) -> Optional[int]:
    """Move the oldest STM node into WM, applying graph reduction if enabled."""
    if not state.stm:
        return None
    oldest = state.stm.pop(0)
    state.wm.add(oldest)
    if cfg.enable_reduction:
        outcome = reduce(g, oldest)
        if outcome.reduced:
            state.wm.discard(oldest)
            return None
    return oldest


def reduce(g: PoseGraph, o: int) -> ReduceOutcome:
    """Graph reduction of a node that just entered WM.

    Its loop-closure and visual-proximity links are each combined with its
    non-merged neighbor links into merged neighbor links between the
    partners, then the node and all its links are dropped. Merged neighbor
    links never act as the neighbor side of a later reduction.
    """
    links = g.links_of(o)
    m_links = [
        l for l in links
        if l.link_type == LinkType.LOOP_CLOSURE
        or (l.link_type == LinkType.PROXIMITY and l.visual)
    ]
    if not m_links:
        return ReduceOutcome(reduced=False)
    n_links = [l for l in links if l.link_type == LinkType.NEIGHBOR and not l.merged]

    added = 0
    for m in m_links:
        o_m = m.other(o)
        t_om = m.transform_from(o)
        for n in n_links:
            o_n = n.other(o)
            if o_m == o_n:
                continue
            t = compose(inverse(t_om), n.transform_from(o))
            g.add_link(Link(o_m, o_n, LinkType.NEIGHBOR, t, merged=True))
            added += 1
    removed = g.remove_node(o)
    return ReduceOutcome(reduced=True, links_added=added, links_removed=len(removed))


def _transfer_candidates(
    state: MemoryState,
    g: PoseGraph,
    current: Optional[int],
    extra_pinned: Optional[set[int]] = None,
) -> list[int]:
    """WM ids eligible for transfer, cheapest first (weight asc, id asc)."""
    stm = set(state.stm)
    pinned = set(state.immune) | stm
    if current is not None:
        pinned.add(current)
    if extra_pinned:
        pinned |= extra_pinned
    for sid in stm:
        if sid in g.nodes:
            pinned.update(g.neighbors(sid))
    eligible = [i for i in state.wm if i not in pinned]
    eligible.sort(key=lambda i: (g.nodes[i].weight, i))
    return eligible


def transfer(
    state: MemoryState,
    g: PoseGraph,
    store: LtmStore,
    k: int,
    current: Optional[int] = None,
    extra_pinned: Optional[set[int]] = None,
) -> list[int]:
    """Serialize the k cheapest eligible WM nodes into LTM.

    Oldest and lightest go first; immune nodes, STM nodes, nodes linked to
    STM nodes, and the current node never move. Links of a transferred node
    persist in the store, except temporary links which are planner-owned.
    """
    if k <= 0:
        return []
    moved = []
    for nid in _transfer_candidates(state, g, current, extra_pinned)[:k]:
        node = g.nodes[nid]
        store.put_node(node)
        for link in g.links_of(nid):
            if link.link_type != LinkType.TEMPORARY:
                store.put_link(link)
        g.remove_node(nid)
        state.wm.discard(nid)
        state.ltm.add(nid)
        moved.append(nid)
    return moved


def enforce_budget(
    state: MemoryState,
    g: PoseGraph,
    store: LtmStore,
    last_update_duration: float,
    cfg: Config,
    current: Optional[int] = None,
    extra_pinned: Optional[set[int]] = None,
) -> int:
    """Transfer nodes at end of update to hold the time budget.

    Over budget: one extra node on top of offsetting this update's
    retrievals; under budget: transfers only offset retrievals, keeping WM
    size constant.
    """
    n = state.retrieved_this_update
    if last_update_duration >= cfg.t:
        n += 1
    moved = transfer(state, g, store, n, current=current, extra_pinned=extra_pinned)
    state.retrieved_this_update = 0
    return len(moved)


def retrieve(
    state: MemoryState,
    g: PoseGraph,
    store: LtmStore,
    requested: Iterable[int],
    cfg: Config,
) -> list[int]:
    """Load up to m LTM nodes per update back into WM, in request order.

    Resident ids are ignored; unknown ids are skipped with a warning. Links
    toward resident endpoints are restored into the graph.
    """
    loaded = []
    for nid in requested:
        if state.retrieved_this_update >= cfg.m:
            break
        if nid in g.nodes:
            continue
        if nid not in state.ltm:
            log.warning("retrieve: node %d not in LTM, skipped", nid)
            continue
        node = store.get_node(nid)
        g.add_node(node)
        for link in store.links_of(nid):
            other = link.other(nid)
            if other in g.nodes and g.get_link(link.from_id, link.to_id, link.link_type) is None:
                g.add_link(link)
        state.ltm.discard(nid)
        state.wm.add(nid)
        state.retrieved_this_update += 1
        loaded.append(nid)
    return loaded


def immunize(
    state: MemoryState,
    path_ids: list[int],
    path_poses: dict[int, Pose2],
    robot: Pose2,
    cfg: Config,
) -> set[int]:
    """Pin upcoming path nodes near the robot against transfer.

    Capped at ceil(o * |WM|), keeping the earliest (soonest-needed) path
    nodes when truncating.
    """
    cap = math.ceil(cfg.o * len(state.wm))
    immune: set[int] = set()
    for nid in path_ids:
        if len(immune) >= cap:
            break
        pose = path_poses.get(nid)
        if pose is None:
            continue
        if math.hypot(pose.x - robot.x, pose.y - robot.y) <= cfg.r:
            immune.add(nid)
    state.immune = immune
    return immune
