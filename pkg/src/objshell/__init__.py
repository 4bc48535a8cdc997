"""Object shell toolkit: entry/exit depth shells, linear-time stitching and
parallel-jaw grasp maps, computed directly from geometry."""

from objshell.geometry import (
    CameraModel,
    DepthImage,
    ObjectShell,
    PointCloud,
    Pose,
    TriangleMesh,
    backproject,
    project,
)

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "DepthImage",
    "ObjectShell",
    "PointCloud",
    "Pose",
    "TriangleMesh",
    "backproject",
    "project",
    "__version__",
]
