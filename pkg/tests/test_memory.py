import math

import pytest

from memslam import memory as mem
from memslam.config import Config
from memslam.geometry import Pose2, Transform2
from memslam.ltm_store import LtmStore
from memslam.pose_graph import Link, LinkType, PoseGraph, local_map
from memslam.signature import Signature, similarity

from conftest import make_node, make_signature


@pytest.fixture
def setup(tmp_path):
    g = PoseGraph()
    state = mem.MemoryState()
    store = LtmStore(tmp_path / "ltm.splm", scan_max_range=4.0)
    return g, state, store


def insert(g, state, cfg, nid, prev, **kwargs):
    node = make_node(nid, **kwargs)
    disp = mem.stm_insert(state, g, node, prev, cfg)
    return node, disp


# -- similarity ---------------------------------------------------------------

def test_similarity_identical():
    a = make_signature((1, 2, 3))
    assert similarity(a, a) == 1.0


def test_similarity_disjoint():
    assert similarity(make_signature((1, 2)), make_signature((3, 4))) == 0.0


def test_similarity_both_empty():
    assert similarity(Signature(), Signature()) == 0.0


def test_similarity_partial_overlap_is_boundary():
    a = make_signature(range(10))
    b = make_signature((0, 1, 2, 100, 101, 102, 103, 104, 105, 106))
    # 3 shared over max(10, 10): exactly the default threshold
    assert similarity(a, b) == pytest.approx(0.3)
    assert similarity(a, b) >= Config().y


def test_similarity_multiset_counts():
    a = Signature((5, 5, 6), {})
    b = Signature((5, 7, 7, 7), {})
    assert similarity(a, b) == pytest.approx(1 / 4)


# -- stm_insert ---------------------------------------------------------------

def test_not_moving_deleted(setup, cfg):
    g, state, store = setup
    n0, d0 = insert(g, state, cfg, 0, None, x=1.0)
    assert d0 == mem.Disposition.ADDED
    n1, d1 = insert(g, state, cfg, 1, 0, x=1.0)
    assert d1 == mem.Disposition.DELETED_NOT_MOVING
    assert 1 not in g.nodes
    assert len(g.nodes) == 1
    assert g.nodes[0].weight == 0  # graph unchanged, no weight bump


def test_similar_signature_bumps_previous_weight(setup, cfg):
    g, state, store = setup
    insert(g, state, cfg, 0, None, x=0.0, words=(1, 2, 3, 4))
    insert(g, state, cfg, 1, 0, x=0.5, words=(1, 2, 9, 10))
    # 2 shared / 4 = 0.5 >= y = 0.3
    assert g.nodes[0].weight == 1
    assert g.nodes[1].weight == 0


def test_dissimilar_signature_no_bump(setup, cfg):
    g, state, store = setup
    insert(g, state, cfg, 0, None, x=0.0, words=(1, 2, 3, 4))
    insert(g, state, cfg, 1, 0, x=0.5, words=(9, 10, 11, 12))
    assert g.nodes[0].weight == 0


def test_neighbor_link_carries_refined_odometry_delta(setup, cfg):
    from memslam.scan import transform_points
    from conftest import make_room_scan, scan_from_points

    g, state, store = setup
    n0, _ = insert(g, state, cfg, 0, None, x=0.0)
    # node 1 really sits 0.75 m ahead: its scan shows node-0's room shifted
    shifted = scan_from_points(transform_points(n0.scan.points(), -0.75, 0.0, 0.0))
    node1 = make_node(1, x=0.75, scan=shifted)
    mem.stm_insert(state, g, node1, 0, cfg)
    link = g.get_link(0, 1, LinkType.NEIGHBOR)
    assert link is not None
    assert link.transform.dx == pytest.approx(0.75, abs=1e-6)
    assert link.transform.dy == pytest.approx(0.0, abs=1e-6)


def test_icp_refinement_corrects_bad_odometry(setup, cfg):
    from memslam.scan import transform_points
    from conftest import scan_from_points

    g, state, store = setup
    n0, _ = insert(g, state, cfg, 0, None, x=0.0)
    # odometry claims 0.85 m but the scans say 0.75 m
    shifted = scan_from_points(transform_points(n0.scan.points(), -0.75, 0.0, 0.0))
    node1 = make_node(1, x=0.85, scan=shifted)
    mem.stm_insert(state, g, node1, 0, cfg)
    link = g.get_link(0, 1, LinkType.NEIGHBOR)
    assert link.transform.dx == pytest.approx(0.75, abs=1e-3)


def test_stm_overflow_moves_oldest_to_wm(setup):
    g, state, store = setup
    cfg = Config(s=3, enable_reduction=False)
    for k in range(4):
        insert(g, state, cfg, k, k - 1 if k else None, x=float(k))
    assert state.stm == [1, 2, 3]
    assert state.wm == {0}
    state.check_partition()


# -- transfer -----------------------------------------------------------------

def test_transfer_weight_then_id_order(setup, cfg):
    g, state, store = setup
    for nid, w in ((5, 0), (3, 2), (8, 0)):
        g.add_node(make_node(nid, weight=w))
        state.wm.add(nid)
    moved = mem.transfer(state, g, store, 2)
    assert moved == [5, 8]
    assert state.ltm == {5, 8}
    assert state.wm == {3}
    state.check_partition()


def test_transfer_zero_is_noop(setup, cfg):
    g, state, store = setup
    g.add_node(make_node(1))
    state.wm.add(1)
    assert mem.transfer(state, g, store, 0) == []
    assert state.wm == {1}


def test_transfer_respects_immunity(setup, cfg):
    g, state, store = setup
    for nid, w in ((5, 0), (3, 2), (8, 0)):
        g.add_node(make_node(nid, weight=w))
        state.wm.add(nid)
    state.immune = {5}
    moved = mem.transfer(state, g, store, 2)
    assert moved == [8, 3]


def test_transfer_skips_nodes_linked_to_stm(setup, cfg):
    g, state, store = setup
    g.add_node(make_node(1))
    g.add_node(make_node(2))
    g.add_node(make_node(3))
    g.add_link(Link(1, 3, LinkType.NEIGHBOR, Transform2(1, 0, 0)))
    state.wm = {1, 2}
    state.stm = [3]
    moved = mem.transfer(state, g, store, 2)
    assert moved == [2]  # node 1 pinned by its link to STM node 3


def test_transfer_persists_links(setup, cfg):
    g, state, store = setup
    for k in range(3):
        g.add_node(make_node(k, x=float(k)))
    g.add_link(Link(0, 1, LinkType.NEIGHBOR, Transform2(1, 0, 0)))
    g.add_link(Link(1, 2, LinkType.NEIGHBOR, Transform2(1, 0, 0)))
    state.wm = {0, 1, 2}
    mem.transfer(state, g, store, 1)  # moves node 0
    assert store.has_node(0)
    assert len(store.links_of(0)) == 1
    assert 0 not in g.nodes


# -- enforce_budget -------------------------------------------------------------

def test_budget_under_no_retrievals(setup, cfg):
    g, state, store = setup
    g.add_node(make_node(1))
    state.wm.add(1)
    assert mem.enforce_budget(state, g, store, 0.1, cfg) == 0
    assert state.wm == {1}


def test_budget_over_transfers_one(setup, cfg):
    g, state, store = setup
    for k in range(3):
        g.add_node(make_node(k))
        state.wm.add(k)
    assert mem.enforce_budget(state, g, store, 0.25, cfg) == 1
    assert len(state.wm) == 2


def test_budget_offsets_retrievals(setup, cfg):
    g, state, store = setup
    for k in range(4):
        g.add_node(make_node(k))
        state.wm.add(k)
    state.retrieved_this_update = 2
    assert mem.enforce_budget(state, g, store, 0.1, cfg) == 2
    assert state.retrieved_this_update == 0
    assert len(state.wm) == 2


# -- retrieve -------------------------------------------------------------------

def _populate_ltm(g, state, store, ids):
    for nid in ids:
        node = make_node(nid, x=float(nid))
        store.put_node(node)
        state.ltm.add(nid)


def test_retrieve_caps_at_m(setup, cfg):
    g, state, store = setup
    _populate_ltm(g, state, store, [40, 41, 42, 43, 44])
    loaded = mem.retrieve(state, g, store, [40, 41, 42, 43, 44], cfg)
    assert loaded == [40, 41]
    assert state.wm == {40, 41}
    assert state.retrieved_this_update == 2
    state.check_partition()


def test_retrieve_ignores_resident(setup, cfg):
    g, state, store = setup
    g.add_node(make_node(7))
    state.wm.add(7)
    assert mem.retrieve(state, g, store, [7], cfg) == []


def test_retrieve_empty_request(setup, cfg):
    g, state, store = setup
    assert mem.retrieve(state, g, store, [], cfg) == []


def test_retrieve_unknown_id_skipped(setup, cfg):
    g, state, store = setup
    _populate_ltm(g, state, store, [10])
    loaded = mem.retrieve(state, g, store, [99, 10], cfg)
    assert loaded == [10]


def test_retrieve_restores_links_to_resident(setup, cfg):
    g, state, store = setup
    g.add_node(make_node(1))
    state.wm.add(1)
    node = make_node(2)
    store.put_node(node)
    store.put_link(Link(1, 2, LinkType.NEIGHBOR, Transform2(1, 0, 0)))
    state.ltm.add(2)
    mem.retrieve(state, g, store, [2], cfg)
    assert g.get_link(1, 2, LinkType.NEIGHBOR) is not None


# -- immunize --------------------------------------------------------------------

def test_immunize_empty_path(setup, cfg):
    g, state, store = setup
    assert mem.immunize(state, [], {}, Pose2(0, 0, 0), cfg) == set()


def test_immunize_filters_by_radius(setup, cfg):
    g, state, store = setup
    state.wm = set(range(100))
    poses = {1: Pose2(1, 0, 0), 2: Pose2(2, 0, 0), 3: Pose2(30, 0, 0)}
    immune = mem.immunize(state, [1, 2, 3], poses, Pose2(0, 0, 0), cfg)
    assert immune == {1, 2}


def test_immunize_caps_at_ratio_of_wm(setup, cfg):
    g, state, store = setup
    state.wm = set(range(100))
    ids = list(range(30))
    poses = {k: Pose2(0.05 * k, 0, 0) for k in ids}
    immune = mem.immunize(state, ids, poses, Pose2(0, 0, 0), cfg)
    assert len(immune) == 25  # ceil(0.25 * 100)
    assert immune == set(range(25))  # soonest path nodes kept
