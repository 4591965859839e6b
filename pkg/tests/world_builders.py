"""Deterministic world-file generators for the end-to-end scenarios."""

import io
import math


def _corridor_features(lines, counter, x0, y0, x1, y1, facing_deg=None, spacing=1.0):
    """Features along a wall from (x0,y0) to (x1,y1); facing_deg=None for
    omnidirectional features."""
    length = math.hypot(x1 - x0, y1 - y0)
    n = max(int(length / spacing), 1)
    for k in range(n):
        t = (k + 0.5) / n
        x = x0 + t * (x1 - x0)
        y = y0 + t * (y1 - y0)
        if facing_deg is None:
            lines.append(f"F {next(counter)} {x:.3f} {y:.3f}")
        else:
            lines.append(f"F {next(counter)} {x:.3f} {y:.3f} {facing_deg:.1f}")


def _counter(start=0):
    k = start
    while True:
        yield k
        k += 1


def patrol_loop_world(agents=False):
    """Rectangular ring corridor with four corner waypoints, driven
    counter-clockwise. Features face against the driving direction so the
    camera sees them; corners carry omnidirectional features."""
    lines = ["# ring corridor world"]
    # outer box 10 x 8, inner box 6 x 4: corridor 2 m wide
    outer = [(-5, -4, 5, -4), (5, -4, 5, 4), (5, 4, -5, 4), (-5, 4, -5, -4)]
    inner = [(-3, -2, 3, -2), (3, -2, 3, 2), (3, 2, -3, 2), (-3, 2, -3, -2)]
    for seg in outer + inner:
        lines.append("S " + " ".join(str(v) for v in seg))

    ids = _counter()
    # well-textured office ring: omnidirectional features on every wall
    _corridor_features(lines, ids, -4.5, -3.9, 4.5, -3.9, spacing=0.35)
    _corridor_features(lines, ids, -2.5, -2.1, 2.5, -2.1, spacing=0.35)
    _corridor_features(lines, ids, 4.9, -3.0, 4.9, 3.0, spacing=0.35)
    _corridor_features(lines, ids, 3.1, -1.5, 3.1, 1.5, spacing=0.35)
    _corridor_features(lines, ids, 4.5, 3.9, -4.5, 3.9, spacing=0.35)
    _corridor_features(lines, ids, 2.5, 2.1, -2.5, 2.1, spacing=0.35)
    _corridor_features(lines, ids, -4.9, 3.0, -4.9, -3.0, spacing=0.35)
    _corridor_features(lines, ids, -3.1, 1.5, -3.1, -1.5, spacing=0.35)
    # omnidirectional feature clusters at the corners (enough spread for the
    # word-inlier gate from any approach direction)
    for cx, cy in [(-4.4, -3.4), (4.4, -3.4), (4.4, 3.4), (-4.4, 3.4),
                   (-3.4, -1.6), (3.4, -1.6), (3.4, 1.6), (-3.4, 1.6)]:
        for ox, oy in [(0.0, 0.0), (0.35, 0.15), (-0.15, 0.35), (0.2, -0.2),
                       (-0.3, -0.1), (0.05, 0.45)]:
            lines.append(f"F {next(ids)} {cx + ox:.2f} {cy + oy:.2f}")

    if agents:
        # two people crossing the corridors, pausing in the lane
        lines.append("A 1.0 -3.0 0.22 1.0 -2.3 p6.0 1.0 -3.7 p6.0")
        lines.append("A -4.0 1.0 0.22 -4.7 1.0 p5.0 -3.3 1.0 p5.0")

    lines += [
        "W wp1 -4 -3 0",
        "W wp2 4 -3 1.5708",
        "W wp3 4 3 3.1416",
        "W wp4 -4 3 -1.5708",
    ]
    return "\n".join(lines) + "\n"


def hall_world():
    """Straight 9 m hall with alcoves for laser structure. All features face
    south, so only the northbound leg sees them; the return leg must rely on
    scan alignment."""
    lines = ["# out-and-back hall"]
    segs = [
        (-1.0, 0.0, 1.0, 0.0),        # south end wall
        (-1.0, 0.0, -1.0, 9.0),       # west wall
        (1.0, 0.0, 1.0, 9.0),         # east wall
        (-1.0, 9.0, 1.0, 9.0),        # north end wall
        # alcove notches on the west wall (laser anchors along the hall)
        (-1.0, 2.0, -1.4, 2.0), (-1.4, 2.0, -1.4, 2.6), (-1.4, 2.6, -1.0, 2.6),
        (-1.0, 5.0, -1.4, 5.0), (-1.4, 5.0, -1.4, 5.6), (-1.4, 5.6, -1.0, 5.6),
        # and on the east wall, offset
        (1.0, 3.5, 1.4, 3.5), (1.4, 3.5, 1.4, 4.1), (1.4, 4.1, 1.0, 4.1),
        (1.0, 6.5, 1.4, 6.5), (1.4, 6.5, 1.4, 7.1), (1.4, 7.1, 1.0, 7.1),
    ]
    for seg in segs:
        lines.append("S " + " ".join(str(v) for v in seg))
    ids = _counter()
    _corridor_features(lines, ids, -0.9, 1.0, -0.9, 8.0, -90.0, spacing=0.8)
    _corridor_features(lines, ids, 0.9, 1.4, 0.9, 8.4, -90.0, spacing=0.8)
    lines += [
        "W start 0 0.8 1.5708",
        "W far 0 8.0 1.5708",
    ]
    return "\n".join(lines) + "\n"


def two_session_world():
    """An open room with clutter features along an L-shaped route; session
    two restarts at the same spot and must hook onto session one's map."""
    lines = ["# two session room"]
    segs = [(-1.5, -1.5, 6.5, -1.5), (6.5, -1.5, 6.5, 6.5),
            (6.5, 6.5, -1.5, 6.5), (-1.5, 6.5, -1.5, -1.5)]
    for seg in segs:
        lines.append("S " + " ".join(str(v) for v in seg))
    ids = _counter()
    # objects sprinkled near the drive line so the forward camera always has
    # a handful of words in view (all omnidirectional)
    spots = [
        (1.2, 0.4), (1.6, -0.5), (2.2, 0.3), (2.8, -0.4), (3.4, 0.5),
        (4.0, -0.3), (4.6, 0.4), (5.2, -0.5), (5.8, 0.2),
        (3.6, 1.0), (2.9, 1.6), (3.5, 2.2), (2.8, 2.9), (3.6, 3.5),
        (2.9, 4.2), (3.4, 4.8), (4.4, 1.8), (4.9, 2.9), (1.9, 1.1),
    ]
    for fx, fy in spots:
        lines.append(f"F {next(ids)} {fx} {fy}")
    _corridor_features(lines, ids, -1.4, -1.4, 6.4, -1.4, spacing=0.8)
    _corridor_features(lines, ids, 6.4, -1.4, 6.4, 6.4, spacing=0.8)
    lines += [
        "W a 3.2 0.0 0",
        "W b 3.2 3.6 1.5708",
    ]
    return "\n".join(lines) + "\n"
