import math

import pytest

from memslam.geometry import Pose2, Transform2, apply
from memslam.ltm_store import LtmStore
from memslam.pose_graph import (
    Link,
    LinkType,
    PoseGraph,
    export_graph_text,
    global_map,
    local_map,
)

from conftest import make_node


def chain_graph(n, link_type=LinkType.NEIGHBOR):
    g = PoseGraph()
    for k in range(n):
        g.add_node(make_node(k, x=float(k)))
    for k in range(n - 1):
        g.add_link(Link(k, k + 1, link_type, Transform2(1, 0, 0)))
    return g


def bfs_oracle(adjacency, start, allowed):
    """Independent reachability check: plain set-based flood fill."""
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for node in frontier:
            for other in adjacency.get(node, ()):
                if other in allowed and other not in seen:
                    seen.add(other)
                    nxt.append(other)
        frontier = nxt
    return seen


def test_link_uniqueness_replaces_transform():
    g = chain_graph(2)
    g.add_link(Link(0, 1, LinkType.NEIGHBOR, Transform2(2, 0, 0)))
    assert g.link_count() == 1
    assert g.get_link(0, 1, LinkType.NEIGHBOR).transform.dx == 2


def test_same_pair_different_kinds_coexist():
    g = chain_graph(2)
    g.add_link(Link(0, 1, LinkType.LOOP_CLOSURE, Transform2(1, 0, 0)))
    assert g.link_count() == 2


def test_self_link_rejected():
    g = chain_graph(2)
    with pytest.raises(ValueError):
        g.add_link(Link(0, 0, LinkType.NEIGHBOR, Transform2(0, 0, 0)))


def test_remove_node_drops_links():
    g = chain_graph(3)
    removed = g.remove_node(1)
    assert len(removed) == 2
    assert g.link_count() == 0
    assert g.neighbors(0) == []


def test_local_map_full_chain():
    g = chain_graph(3)
    sub = local_map(g, 2, {0, 1, 2})
    assert sub.ids == frozenset({0, 1, 2})


def test_local_map_gap_isolates_last():
    # node 1 absent from WM: component of 2 collapses to itself
    g = chain_graph(3)
    sub = local_map(g, 2, {0, 2})
    assert sub.ids == frozenset({2})
    adjacency = {0: [1], 1: [0, 2], 2: [1]}
    assert sub.ids == frozenset(bfs_oracle(adjacency, 2, {0, 2}))


def test_local_map_requires_last_in_wm():
    g = chain_graph(3)
    with pytest.raises(ValueError):
        local_map(g, 2, {0, 1})


def test_local_map_spans_sessions_via_loop_closure():
    g = PoseGraph()
    for k in range(3):
        g.add_node(make_node(k, x=float(k), session=0))
    for k in range(3, 6):
        g.add_node(make_node(k, x=float(k - 3), session=1))
    for k in (0, 1, 3, 4):
        g.add_link(Link(k, k + 1, LinkType.NEIGHBOR, Transform2(1, 0, 0)))
    g.add_link(Link(5, 2, LinkType.LOOP_CLOSURE, Transform2(0, 0, 0)))
    sub = local_map(g, 5, set(range(6)))
    assert sub.ids == frozenset(range(6))
    sessions = {g.nodes[i].session for i in sub.ids}
    assert sessions == {0, 1}


def test_local_map_never_contains_non_wm(tmp_path):
    g = chain_graph(6)
    wm = {1, 2, 3, 5}
    sub = local_map(g, 3, wm)
    assert sub.ids <= frozenset(wm)


def test_global_map_equals_local_when_ltm_empty(tmp_path):
    g = chain_graph(4)
    store = LtmStore(tmp_path / "l.splm")
    sub_l = local_map(g, 3, {0, 1, 2, 3})
    sub_g = global_map(g, 3, set(), store)
    assert sub_l.ids == sub_g.ids


def test_global_map_bridges_through_ltm(tmp_path):
    g = chain_graph(3)
    store = LtmStore(tmp_path / "l.splm")
    # transfer node 1 to the store
    node = g.nodes[1]
    store.put_node(node)
    for link in g.links_of(1):
        store.put_link(link)
    g.remove_node(1)

    assert local_map(g, 2, {0, 2}).ids == frozenset({2})
    sub = global_map(g, 2, {1}, store)
    assert sub.ids == frozenset({0, 1, 2})
    # chained poses follow the link transforms back from the root
    assert sub.poses[1].x == pytest.approx(sub.poses[2].x - 1)
    assert sub.poses[0].x == pytest.approx(sub.poses[2].x - 2)


def test_global_map_excludes_disconnected_session(tmp_path):
    g = chain_graph(3)
    for k in range(10, 13):
        g.add_node(make_node(k, session=1))
    g.add_link(Link(10, 11, LinkType.NEIGHBOR, Transform2(1, 0, 0)))
    store = LtmStore(tmp_path / "l.splm")
    sub = global_map(g, 2, set(), store)
    assert sub.ids == frozenset({0, 1, 2})


def test_local_map_subset_of_global(tmp_path):
    g = chain_graph(5)
    store = LtmStore(tmp_path / "l.splm")
    sub_l = local_map(g, 4, {2, 3, 4})
    sub_g = global_map(g, 4, set(), store)
    assert sub_l.ids <= sub_g.ids


def test_link_round_trip_convention():
    g = chain_graph(4)
    for link in g.all_links():
        a = g.nodes[link.from_id].opt_pose
        b = g.nodes[link.to_id].opt_pose
        got = apply(a, link.transform)
        assert (got.x, got.y) == pytest.approx((b.x, b.y), abs=1e-9)


def test_export_graph_text_format():
    g = chain_graph(2)
    g.add_link(Link(0, 1, LinkType.PROXIMITY, Transform2(1, 0, 0.5), visual=True))
    nodes = [(n.id, n.session, n.weight, n.opt_pose) for n in g.nodes.values()]
    text = export_graph_text(nodes, g.all_links())
    lines = text.strip().splitlines()
    assert lines[0].startswith("N 0 0 0 ")
    assert any(line.startswith("L 0 1 neighbor ") for line in lines)
    assert any(line.startswith("L 0 1 proximity_visual ") for line in lines)
