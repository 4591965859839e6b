"""Pose graph: nodes, typed links, and local/global map extraction.

Link transform convention: a link from A to B stores the pose of B in the
frame of A (pose_B = apply(pose_A, T)). At most one link of a given type
exists per unordered node pair; re-adding replaces the stored transform.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional

from .geometry import Pose2, Transform2, apply, inverse
from .scan import LaserScan
from .signature import Signature


class LinkType(IntEnum):
    NEIGHBOR = 0
    LOOP_CLOSURE = 1
    PROXIMITY = 2
    TEMPORARY = 3


LINK_TYPE_NAMES = {
    LinkType.NEIGHBOR: "neighbor",
    LinkType.LOOP_CLOSURE: "loop_closure",
    LinkType.PROXIMITY: "proximity",
    LinkType.TEMPORARY: "temporary",
}


@dataclass(slots=True)
class Link:
    from_id: int
    to_id: int
    link_type: LinkType
    transform: Transform2
    merged: bool = False  # neighbor links only: produced by graph reduction
    visual: bool = False  # proximity links only: step-1 (word based) link

    def key(self) -> tuple[int, int, int]:
        a, b = self.from_id, self.to_id
        if a > b:
            a, b = b, a
        return (a, b, int(self.link_type))

    def transform_from(self, node_id: int) -> Transform2:
        """Transform of this link as seen from node_id toward the other end."""
        if node_id == self.from_id:
            return self.transform
        if node_id == self.to_id:
            return inverse(self.transform)
        raise ValueError(f"node {node_id} is not an endpoint of {self}")

    def other(self, node_id: int) -> int:
        return self.to_id if node_id == self.from_id else self.from_id

    def kind_token(self) -> str:
        if self.link_type == LinkType.NEIGHBOR:
            return "neighbor_merged" if self.merged else "neighbor"
        if self.link_type == LinkType.PROXIMITY:
            return "proximity_visual" if self.visual else "proximity_laser"
        return LINK_TYPE_NAMES[self.link_type]


@dataclass
class Node:
    id: int
    session: int
    weight: int
    odom_pose: Pose2
    opt_pose: Pose2
    signature: Signature
    scan: LaserScan
    # session id of the frame opt_pose was last optimized in; -1 = never/stale
    opt_epoch: int = -1


class PoseGraph:
    """Mutable single-writer pose graph with per-pair-per-type link uniqueness."""

    def __init__(self):
        self.nodes: dict[int, Node] = {}
        self._links: dict[tuple[int, int, int], Link] = {}
        self._adj: dict[int, set[tuple[int, int, int]]] = {}

    # -- nodes ------------------------------------------------------------

    def add_node(self, node: Node) -> None:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node
        self._adj.setdefault(node.id, set())

    def remove_node(self, node_id: int) -> list[Link]:
        """Remove a node and all incident links; returns the removed links."""
        removed = [self._links[k] for k in sorted(self._adj.get(node_id, ()))]
        for link in removed:
            self.remove_link(link.from_id, link.to_id, link.link_type)
        self._adj.pop(node_id, None)
        del self.nodes[node_id]
        return removed

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    # -- links ------------------------------------------------------------

    def add_link(self, link: Link) -> None:
        if link.from_id == link.to_id:
            raise ValueError("self-links are not allowed")
        if link.from_id not in self.nodes or link.to_id not in self.nodes:
            raise KeyError(f"link endpoints must exist: {link.from_id}->{link.to_id}")
        key = link.key()
        self._links[key] = link
        self._adj[link.from_id].add(key)
        self._adj[link.to_id].add(key)

    def remove_link(self, a: int, b: int, link_type: LinkType) -> Optional[Link]:
        key = (min(a, b), max(a, b), int(link_type))
        link = self._links.pop(key, None)
        if link is not None:
            self._adj[link.from_id].discard(key)
            self._adj[link.to_id].discard(key)
        return link

    def get_link(self, a: int, b: int, link_type: LinkType) -> Optional[Link]:
        return self._links.get((min(a, b), max(a, b), int(link_type)))

    def links_of(self, node_id: int) -> list[Link]:
        return [self._links[k] for k in sorted(self._adj.get(node_id, ()))]

    def neighbors(self, node_id: int) -> list[int]:
        out = {self._links[k].other(node_id) for k in self._adj.get(node_id, ())}
        return sorted(out)

    def all_links(self) -> list[Link]:
        return [self._links[k] for k in sorted(self._links)]

    def link_count(self) -> int:
        return len(self._links)


@dataclass
class Subgraph:
    """Read-only snapshot of one connected component.

    poses maps node id -> pose in the snapshot frame. For a local map these
    are the stored optimized poses (only where still valid for the current
    session); for a global map they are chained from the root.
    """

    root: int
    ids: frozenset[int]
    links: tuple[Link, ...]
    poses: dict[int, Pose2] = field(default_factory=dict)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.ids

    def __len__(self) -> int:
        return len(self.ids)

    def adjacency(self) -> dict[int, list[Link]]:
        adj: dict[int, list[Link]] = {i: [] for i in self.ids}
        for link in self.links:
            adj[link.from_id].append(link)
            adj[link.to_id].append(link)
        return adj


def _component(adjacency, start: int, allowed) -> list[int]:
    """BFS over an id -> neighbor-ids callable, restricted to allowed(id)."""
    seen = {start}
    order = [start]
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in adjacency(cur):
            if nxt not in seen and allowed(nxt):
                seen.add(nxt)
                order.append(nxt)
                queue.append(nxt)
    return order


def local_map(g: PoseGraph, last: int, wm: Iterable[int], session: int | None = None) -> Subgraph:
    """Connected component of `last` restricted to the given resident id set.

    When session is given, stored optimized poses are exposed only for nodes
    whose last optimization ran in that session's frame; stale entries are
    left out so the optimizer re-chains them.
    """
    wm_set = set(wm)
    if last not in wm_set:
        raise ValueError(f"last node {last} not in the working set")
    ids = _component(g.neighbors, last, wm_set.__contains__)
    id_set = frozenset(ids)
    links = tuple(
        link for link in g.all_links() if link.from_id in id_set and link.to_id in id_set
    )
    poses: dict[int, Pose2] = {}
    for i in ids:
        node = g.nodes[i]
        if session is None or node.opt_epoch == session:
            poses[i] = node.opt_pose.copy()
    return Subgraph(root=last, ids=id_set, links=links, poses=poses)


def global_map(g: PoseGraph, last: int, ltm_ids: Iterable[int], store) -> Subgraph:
    """Connected component of `last` over resident nodes plus the LTM store.

    LTM node records are loaded read-only (they are not retrieved into WM);
    poses are chained from the root over a BFS spanning tree, which keeps the
    snapshot cheap enough for planning without a global optimization.
    """
    if last not in g.nodes:
        raise ValueError(f"unknown root node {last}")
    ltm = set(ltm_ids)

    def exists(i: int) -> bool:
        return i in g.nodes or i in ltm

    link_map: dict[tuple[int, int, int], Link] = {}

    def adjacency(i: int):
        out = set()
        if i in g.nodes:
            for link in g.links_of(i):
                link_map[link.key()] = link
                out.add(link.other(i))
        for link in store.links_of(i):
            if exists(link.other(i)):
                link_map.setdefault(link.key(), link)
                out.add(link.other(i))
        return sorted(out)

    ids = _component(adjacency, last, exists)
    id_set = frozenset(ids)
    for i in ids:
        if i in ltm:
            store.get_node(i)  # read-only load; validates the record exists

    links = tuple(
        link_map[k]
        for k in sorted(link_map)
        if link_map[k].from_id in id_set and link_map[k].to_id in id_set
    )

    # chain poses from the root along a BFS spanning tree
    root_node = g.nodes[last]
    poses = {last: root_node.opt_pose.copy()}
    adj: dict[int, list[Link]] = {i: [] for i in ids}
    for link in links:
        adj[link.from_id].append(link)
        adj[link.to_id].append(link)
    queue = deque([last])
    while queue:
        cur = queue.popleft()
        for link in sorted(adj[cur], key=lambda l: l.key()):
            nxt = link.other(cur)
            if nxt not in poses:
                poses[nxt] = apply(poses[cur], link.transform_from(cur))
                queue.append(nxt)
    return Subgraph(root=last, ids=id_set, links=links, poses=poses)


def export_graph_text(nodes: Iterable[tuple[int, int, int, Pose2]], links: Iterable[Link]) -> str:
    """Edge-list text format: N id session weight x y theta / L from to kind dx dy dtheta."""
    lines = []
    for nid, session, weight, pose in nodes:
        lines.append(
            f"N {nid} {session} {weight} {pose.x:.9f} {pose.y:.9f} {pose.theta:.9f}"
        )
    for link in links:
        t = link.transform
        lines.append(
            f"L {link.from_id} {link.to_id} {link.kind_token()} "
            f"{t.dx:.9f} {t.dy:.9f} {t.dtheta:.9f}"
        )
    return "\n".join(lines) + "\n"
