"""memslam: memory-managed 2D pose-graph SLAM with planning and a simulator."""

from .config import Config, load_config
from .geometry import Pose2, Transform2, apply, compose, inverse
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "Config",
    "load_config",
    "Pose2",
    "Transform2",
    "apply",
    "compose",
    "inverse",
    "KERNEL_BACKEND",
    "__version__",
]
