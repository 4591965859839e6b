"""Laser scan container and point conversion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LaserScan:
    """One planar range scan.

    Beams are stored as float32 (matching the on-disk layout) in the sensor
    frame. A beam whose range reaches max_range carries no obstacle evidence
    and is flagged invalid; its ray is still useful as free space.
    """

    angles: np.ndarray  # float32, radians, sensor frame
    ranges: np.ndarray  # float32, meters
    max_range: float
    fov: float

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float32)
        self.ranges = np.asarray(self.ranges, dtype=np.float32)
        if self.angles.shape != self.ranges.shape:
            raise ValueError("angles and ranges must have the same length")

    def __len__(self) -> int:
        return len(self.ranges)

    @property
    def valid(self) -> np.ndarray:
        return (self.ranges > 0.0) & (self.ranges < np.float32(self.max_range))

    def points(self) -> np.ndarray:
        """Valid-beam endpoints as an (N, 2) float64 array in the sensor frame.

        Max-range beams are dropped: they carry no obstacle evidence.
        """
        m = self.valid
        a = self.angles[m].astype(np.float64)
        r = self.ranges[m].astype(np.float64)
        return np.column_stack((r * np.cos(a), r * np.sin(a)))


def empty_scan(max_range: float = 4.0, fov: float = 0.0) -> LaserScan:
    z = np.zeros(0, dtype=np.float32)
    return LaserScan(z, z.copy(), max_range, fov)


def transform_points(points: np.ndarray, x: float, y: float, theta: float) -> np.ndarray:
    """Rigidly move an (N, 2) point array by (x, y, theta)."""
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return points @ rot.T + np.array([x, y])
