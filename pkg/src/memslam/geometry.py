"""SE(2) primitives: poses, rigid transforms, and their algebra.

Conventions used throughout the package:
  * angles are radians, always wrapped to (-pi, pi]
  * a Transform2 stored on a link from A to B is the pose of B expressed in
    the frame of A, i.e. pose_B = apply(pose_A, T_AB)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = a % TWO_PI
    if r > math.pi:
        r -= TWO_PI
    return r


@dataclass(slots=True)
class Pose2:
    """Planar pose (x, y, theta)."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        self.theta = wrap_angle(self.theta)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)

    def copy(self) -> "Pose2":
        return Pose2(self.x, self.y, self.theta)


@dataclass(slots=True)
class Transform2:
    """Rigid planar transform (dx, dy, dtheta)."""

    dx: float
    dy: float
    dtheta: float

    def __post_init__(self):
        self.dtheta = wrap_angle(self.dtheta)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dtheta)


IDENTITY = Transform2(0.0, 0.0, 0.0)


def compose(a: Transform2, b: Transform2) -> Transform2:
    """Rigid composition a then b (b expressed in a's frame)."""
    c, s = math.cos(a.dtheta), math.sin(a.dtheta)
    return Transform2(
        a.dx + c * b.dx - s * b.dy,
        a.dy + s * b.dx + c * b.dy,
        wrap_angle(a.dtheta + b.dtheta),
    )


def inverse(t: Transform2) -> Transform2:
    c, s = math.cos(t.dtheta), math.sin(t.dtheta)
    return Transform2(
        -(c * t.dx + s * t.dy),
        -(-s * t.dx + c * t.dy),
        wrap_angle(-t.dtheta),
    )


def apply(p: Pose2, t: Transform2) -> Pose2:
    """Move pose p by t expressed in p's own frame."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2(
        p.x + c * t.dx - s * t.dy,
        p.y + s * t.dx + c * t.dy,
        wrap_angle(p.theta + t.dtheta),
    )


def pose_as_transform(p: Pose2) -> Transform2:
    """Interpret a pose as the transform from the origin to that pose."""
    return Transform2(p.x, p.y, p.theta)


def transform_as_pose(t: Transform2) -> Pose2:
    return Pose2(t.dx, t.dy, t.dtheta)


def transform_between(a: Pose2, b: Pose2) -> Transform2:
    """Transform T with apply(a, T) == b, i.e. pose of b in the frame of a."""
    return compose(inverse(pose_as_transform(a)), pose_as_transform(b))


def distance(a: Pose2 | Transform2, b: Pose2 | Transform2) -> float:
    ax, ay = (a.x, a.y) if isinstance(a, Pose2) else (a.dx, a.dy)
    bx, by = (b.x, b.y) if isinstance(b, Pose2) else (b.dx, b.dy)
    return math.hypot(ax - bx, ay - by)
