"""Core geometric types and pinhole projection.

Camera frame: +Z along the optical axis into the scene, +X right, +Y down.
Pixel (u, v) has its center at integer coordinates, so the ray of pixel
(cx, cy) is the optical axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

# Triangles with area at or below this (m^2) are treated as degenerate.
DEGENERATE_AREA = 1e-14


class InvariantError(ValueError):
    """Input data violates a structural invariant of a geometric type."""


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvariantError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise InvariantError("raster size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvariantError("principal point outside the raster")

    @classmethod
    def default(cls, width: int = 640, height: int = 480, focal: float = 600.0) -> "CameraModel":
        """Centered pinhole camera; focal length scales with width/640."""
        f = focal * width / 640.0
        return cls(f, f, width / 2.0, height / 2.0, width, height)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    def pixel_directions(self) -> np.ndarray:
        """Unit ray direction for every pixel center, shape (H, W, 3)."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        d = np.stack(
            [(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1
        )
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def backproject_image(self, depth: np.ndarray) -> np.ndarray:
        """Backproject a full (H, W) depth raster to (H, W, 3) points; no validity check."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        return np.stack(
            [(u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth], axis=-1
        )


def project(p, cam: CameraModel):
    """Project camera-frame point(s) to (u, v, z).

    Accepts a single point of shape (3,) or an (N, 3) array.
    """
    p = np.asarray(p, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise ValueError("behind camera")
    u = cam.fx * p[..., 0] / z + cam.cx
    v = cam.fy * p[..., 1] / z + cam.cy
    if p.ndim == 1:
        return float(u), float(v), float(z)
    return u, v, z


def backproject(u, v, z, cam: CameraModel) -> np.ndarray:
    """Inverse of :func:`project` for positive depth."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("invalid depth")
    return np.stack([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z], axis=-1)


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Depth raster in meters, shape (height, width); values <= 0 are invalid."""

    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise InvariantError("depth raster must be 2-D")
        if np.any(np.isinf(d)):
            raise InvariantError("depth raster contains infinite values")
        d[np.isnan(d)] = 0.0
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @classmethod
    def empty(cls, width: int, height: int) -> "DepthImage":
        return cls(np.zeros((height, width)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return self.data > 0

    def valid_count(self) -> int:
        return int(np.count_nonzero(self.mask))


@dataclass(frozen=True, eq=False)
class ObjectShell:
    """Entry/exit depth pair sharing one mask."""

    entry: DepthImage
    exit: DepthImage
    camera: CameraModel

    def __post_init__(self):
        shape = self.camera.shape
        if self.entry.data.shape != shape or self.exit.data.shape != shape:
            raise InvariantError("shell layers do not match the camera raster")
        if not np.array_equal(self.entry.mask, self.exit.mask):
            raise InvariantError("entry and exit masks differ")
        m = self.entry.mask
        if np.any(self.entry.data[m] > self.exit.data[m]):
            raise InvariantError("entry depth exceeds exit depth")

    @property
    def mask(self) -> np.ndarray:
        return self.entry.mask


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[triangles[:, i]] for i in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle mesh. Degenerate triangles are dropped on construction."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise InvariantError("triangle index out of range")
        if len(t):
            t = t[triangle_areas(v, t) > DEGENERATE_AREA]
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def __len__(self):
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.triangles)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)] if len(self.triangles) else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def transformed(self, pose: "Pose") -> "TriangleMesh":
        return TriangleMesh(pose.apply(self.vertices), self.triangles)

    def translated(self, offset) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=np.float64), self.triangles)

    def edge_counts(self) -> dict:
        """Undirected edge -> number of incident triangles."""
        e = np.sort(
            np.concatenate(
                [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
            ),
            axis=1,
        )
        keys, counts = np.unique(e, axis=0, return_counts=True)
        return {tuple(k): int(c) for k, c in zip(keys, counts)}

    def is_closed(self) -> bool:
        """Every edge is shared by exactly two triangles."""
        if not len(self.triangles):
            return False
        e = np.sort(
            np.concatenate(
                [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
            ),
            axis=1,
        )
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", p)
        if self.normals is not None:
            n = np.array(self.normals, dtype=np.float64).reshape(-1, 3)
            if n.shape != p.shape:
                raise InvariantError("normals must match points")
            if len(n) and np.max(np.abs(np.linalg.norm(n, axis=1) - 1.0)) > 1e-6:
                raise InvariantError("normals must be unit length")
            object.__setattr__(self, "normals", n)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise InvariantError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply other first."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)


def quaternion_to_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)
