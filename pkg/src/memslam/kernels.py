"""Kernel backend selection.

The compiled extension is used when it imported successfully; setting
MEMSLAM_PURE_KERNELS=1 forces the numpy fallback (useful for benchmarking
and for debugging the kernels themselves).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("MEMSLAM_PURE_KERNELS"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
raycast = _impl.raycast
nearest_neighbors = _impl.nearest_neighbors
mark_rays = _impl.mark_rays
astar_grid = _impl.astar_grid
dwa_evaluate = _impl.dwa_evaluate
