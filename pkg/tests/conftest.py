import math

import numpy as np
import pytest

from memslam.config import Config
from memslam.geometry import Pose2
from memslam.pose_graph import Node
from memslam.scan import LaserScan
from memslam.signature import Signature


def make_signature(words, positions=None):
    """Signature from word ids; positions defaults to a spread-out pattern."""
    words = tuple(words)
    if positions is None:
        positions = {
            w: (1.0 + 0.37 * (k % 7), -1.0 + 0.53 * (k % 5))
            for k, w in enumerate(sorted(set(words)))
        }
    return Signature(words, positions)


def make_room_scan(n_beams=120, max_range=4.0, seed=0):
    """Scan of an irregular star-shaped room: plenty of structure for ICP."""
    rng = np.random.default_rng(seed)
    angles = np.linspace(-math.pi * 2 / 3, math.pi * 2 / 3, n_beams)
    radii = 1.5 + 0.8 * np.sin(3 * angles) + 0.25 * np.cos(7 * angles)
    radii = np.clip(radii + rng.normal(0, 0.0, n_beams), 0.3, max_range - 0.2)
    return LaserScan(angles.astype(np.float32), radii.astype(np.float32),
                     max_range, math.pi * 4 / 3)


ROOM_SEGMENTS = np.array([
    [-3, -2, 3, -2], [3, -2, 3, 2], [3, 2, -3, 2], [-3, 2, -3, -2],
    [-1, -2, -1, -1.4], [-1, -1.4, -0.4, -1.4],
    [1.5, 2, 1.5, 1.2], [1.5, 1.2, 2.2, 1.2],
])


def wall_scan_points(px=0.2, py=-0.1, ptheta=0.3, segments=None, beams=341,
                     fov=math.radians(240), max_range=4.0):
    """Sensor-frame endpoints of a raycast scan in a cornered room."""
    from memslam.kernels import raycast

    segs = ROOM_SEGMENTS if segments is None else segments
    angles = np.linspace(-fov / 2, fov / 2, beams)
    ranges = raycast(px, py, ptheta, angles, segs, np.zeros((0, 3)), max_range)
    valid = ranges < max_range
    a, r = angles[valid], ranges[valid]
    return np.column_stack((r * np.cos(a), r * np.sin(a)))


def scan_from_points(points, max_range=4.0):
    """Rebuild a LaserScan whose endpoints are the given sensor-frame points."""
    pts = np.asarray(points, dtype=np.float64)
    angles = np.arctan2(pts[:, 1], pts[:, 0])
    ranges = np.hypot(pts[:, 0], pts[:, 1])
    order = np.argsort(angles)
    return LaserScan(angles[order].astype(np.float32),
                     ranges[order].astype(np.float32),
                     max_range, math.pi * 4 / 3)


def make_node(nid, x=0.0, y=0.0, theta=0.0, session=0, weight=0,
              words=(), scan=None, positions=None):
    pose = Pose2(x, y, theta)
    return Node(
        id=nid, session=session, weight=weight,
        odom_pose=pose, opt_pose=pose.copy(),
        signature=make_signature(words, positions),
        scan=scan if scan is not None else make_room_scan(),
    )


@pytest.fixture
def cfg():
    return Config()


def pose_matrix(x, y, theta):
    """3x3 homogeneous matrix: the independent oracle for SE(2) algebra."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


def matrix_to_xyt(m):
    return float(m[0, 2]), float(m[1, 2]), math.atan2(m[1, 0], m[0, 0])
