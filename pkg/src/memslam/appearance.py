"""Appearance-based loop closure: tf-idf likelihoods over working-memory
signatures, a Bayesian hypothesis filter, and RANSAC + ICP transform
estimation with weight transfer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import Config
from .geometry import Transform2, inverse
from .pose_graph import Link, LinkType, PoseGraph
from .scan_matching import icp2d, rigid_fit
from .signature import Signature, shared_landmark_pairs

NEW_LOCATION = -1


@dataclass
class Calibration:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")


def back_project(x: float, y: float, d: float, cal: Calibration) -> np.ndarray:
    """Pixel (x, y) at depth d -> 3D point [X, Y, Z] in the camera frame."""
    if d < 0:
        raise ValueError("depth must be non-negative")
    return np.array([(x - cal.cx) * d / cal.fx, (y - cal.cy) * d / cal.fy, d])


@dataclass
class Posterior:
    """Probabilities over {NEW_LOCATION} ∪ {working-memory node ids}."""

    probs: dict[int, float] = field(default_factory=lambda: {NEW_LOCATION: 1.0})

    def normalized_over(self, wm_order: list[int]) -> np.ndarray:
        """Prior vector [new_location, wm...] re-balanced to the current WM."""
        vec = np.zeros(len(wm_order) + 1)
        vec[0] = self.probs.get(NEW_LOCATION, 1.0)
        for k, nid in enumerate(wm_order):
            vec[k + 1] = self.probs.get(nid, 0.0)
        total = vec.sum()
        if total <= 0.0:
            vec[0] = 1.0
            total = 1.0
        return vec / total


def likelihood(query: Signature, wm_nodes: dict[int, Signature]) -> dict[int, float]:
    """tf-idf likelihood per hypothesis, keyed by node id plus NEW_LOCATION.

    Raw score over shared words w: (count_w / |candidate|) * log(N / n_w).
    Scores are normalized against the nonzero-score mean and deviation; only
    scores above mu + sigma are boosted, everything else floors at 1.
    """
    ids = sorted(wm_nodes)
    if not ids:
        return {NEW_LOCATION: 1.0}

    n_docs = len(ids)
    doc_freq: dict[int, int] = {}
    for sig in wm_nodes.values():
        for w in set(sig.words):
            doc_freq[w] = doc_freq.get(w, 0) + 1

    query_words = set(query.words)
    scores = np.zeros(n_docs)
    for k, nid in enumerate(ids):
        sig = wm_nodes[nid]
        if not sig.words:
            continue
        total = len(sig.words)
        s = 0.0
        for w, cnt in sig.word_counts().items():
            if w in query_words:
                s += (cnt / total) * math.log(n_docs / doc_freq[w])
        scores[k] = s

    nz = scores[scores > 0.0]
    out: dict[int, float] = {}
    if len(nz) == 0:
        for nid in ids:
            out[nid] = 1.0
        out[NEW_LOCATION] = 1.0
        return out

    mu = float(nz.mean())
    sigma = float(nz.std())
    if sigma == 0.0:
        for k, nid in enumerate(ids):
            out[nid] = 1.0 + scores[k] if scores[k] > 0.0 else 1.0
        out[NEW_LOCATION] = 1.0 + mu
        return out

    for k, nid in enumerate(ids):
        s = scores[k]
        out[nid] = (s - mu) / sigma + 1.0 if s > mu + sigma else 1.0
    out[NEW_LOCATION] = mu / sigma + 1.0
    return out


def transition_matrix(
    wm_order: list[int],
    g: PoseGraph,
    leak: float = 0.1,
    new_keep: float = 0.1,
) -> np.ndarray:
    """Prediction model over [new_location] + wm_order.

    From a node hypothesis: `leak` flows to new-location and the remainder
    splits evenly between the node and its graph neighbors inside the
    hypothesis set (all of it stays on the node when it has none).
    New-location keeps `new_keep` and spreads the rest uniformly over the
    nodes. Both knobs live in Config; the defaults keep a tracked hypothesis
    competitive with new-location while a 20-hypothesis uniform stream stays
    safely under the detection threshold.
    """
    n = len(wm_order)
    index = {nid: k + 1 for k, nid in enumerate(wm_order)}
    m = np.zeros((n + 1, n + 1))
    if n:
        m[0, 0] = new_keep
        m[1:, 0] = (1.0 - new_keep) / n
    else:
        m[0, 0] = 1.0
    stay = 1.0 - leak
    for nid in wm_order:
        col = index[nid]
        m[0, col] = leak
        neigh = [index[o] for o in g.neighbors(nid) if o in index] if nid in g.nodes else []
        if neigh:
            m[col, col] = stay / 2.0
            share = stay / 2.0 / len(neigh)
            for other in neigh:
                m[other, col] += share
        else:
            m[col, col] = stay
    return m


def bayes_update(
    prior: Posterior,
    lam: dict[int, float],
    wm_order: list[int],
    g: PoseGraph,
    h_threshold: float,
    leak: float = 0.1,
    new_keep: float = 0.1,
) -> tuple[Posterior, Optional[int]]:
    """One predict + update step; returns the posterior and a detection.

    Detection is the argmax node hypothesis when its posterior probability
    reaches the threshold, otherwise None.
    """
    vec = prior.normalized_over(wm_order)
    trans = transition_matrix(wm_order, g, leak=leak, new_keep=new_keep)
    predicted = trans @ vec
    lam_vec = np.empty(len(wm_order) + 1)
    lam_vec[0] = lam.get(NEW_LOCATION, 1.0)
    for k, nid in enumerate(wm_order):
        lam_vec[k + 1] = lam.get(nid, 1.0)
    post = predicted * lam_vec
    total = post.sum()
    if total <= 0.0:
        post = np.zeros_like(post)
        post[0] = 1.0
    else:
        post = post / total

    probs = {NEW_LOCATION: float(post[0])}
    for k, nid in enumerate(wm_order):
        probs[nid] = float(post[k + 1])

    detected = None
    if wm_order:
        best = int(np.argmax(post[1:]))
        if post[best + 1] >= h_threshold:
            detected = wm_order[best]
    return Posterior(probs), detected


def estimate_transform_visual(a, b, cfg: Config, rng: np.random.Generator) -> Optional[Transform2]:
    """Rigid transform from a's frame to b's frame via shared-word landmarks.

    RANSAC over landmark correspondences (minimal sample 2) must reach the
    inlier minimum; the result is then refined against the laser scans with
    the usual ICP acceptance. Returns pose of b in the frame of a, or None.
    """
    pa, pb = shared_landmark_pairs(a.signature, b.signature)
    n = len(pa)
    if n < cfg.i or n < 2:
        return None

    best_inliers: np.ndarray | None = None
    best_count = 0
    thresh = cfg.ransac_inlier_dist
    for _ in range(cfg.ransac_iters):
        j0, j1 = rng.choice(n, size=2, replace=False)
        d_a = pa[j1] - pa[j0]
        d_b = pb[j1] - pb[j0]
        if np.hypot(*d_b) < 1e-9 or np.hypot(*d_a) < 1e-9:
            continue
        theta = math.atan2(d_a[1], d_a[0]) - math.atan2(d_b[1], d_b[0])
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        t = pa[j0] - rot @ pb[j0]
        resid = np.hypot(*(pb @ rot.T + t - pa).T)
        inliers = resid < thresh
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
            if count == n:
                break
    if best_inliers is None or best_count < 2:
        return None

    fit = rigid_fit(pb[best_inliers], pa[best_inliers])
    c, s = math.cos(fit.dtheta), math.sin(fit.dtheta)
    rot = np.array([[c, -s], [s, c]])
    resid = np.hypot(*(pb @ rot.T + np.array([fit.dx, fit.dy]) - pa).T)
    if int((resid < thresh).sum()) < cfg.i:
        return None

    ref = a.scan.points()
    new = b.scan.points()
    if not len(ref) or not len(new):
        return None
    # the word fit seeds the refinement well; no basin search needed
    refined = icp2d(ref, new, fit, cfg, search="off")
    if refined is None:
        return None
    return refined[0]


def on_loop_closure(g: PoseGraph, current: int, matched: int, t_matched_to_current: Transform2) -> None:
    """Record an accepted loop closure: link, weight transfer.

    The link is stored from the current node toward the matched one, so the
    estimated matched->current transform is inverted to fit the convention.
    """
    if current == matched:
        raise ValueError("cannot loop-close a node with itself")
    g.add_link(
        Link(current, matched, LinkType.LOOP_CLOSURE, inverse(t_matched_to_current))
    )
    cur, mat = g.nodes[current], g.nodes[matched]
    cur.weight += mat.weight
    mat.weight = 0
