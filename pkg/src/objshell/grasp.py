"""Parallel-jaw grasp feasibility, width and quality maps.

Grasps are anchored at visible (entry) surface points with the finger axis
along the surface normal. The outer jaw sits 1 mm outside the surface and
the inner jaw ``opening`` meters behind it; the pad cross-section is
centered on the finger axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Optional, Tuple

import numba
import numpy as np
from scipy import ndimage

from objshell.geometry import CameraModel, DepthImage, ObjectShell, PointCloud, TriangleMesh
from objshell.shellmesh import (
    DEFAULT_DISCONTINUITY,
    DegenerateVolumeError,
    mesh_volume_centroid,
    shell_to_pointcloud,
    stitch_shell,
    surface_centroid,
)

N_ROLLS = 8
JAW_OFFSET = 1e-3
JAW_CLEARANCE = 2e-3
DISTANCE_DECIMALS = 12
CAMERA_UP = np.array([0.0, -1.0, 0.0])
CAMERA_RIGHT = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class GripperModel:
    max_opening: float = 0.085
    finger_pad_width: float = 0.020
    finger_pad_height: float = 0.035
    finger_body_thickness: float = 0.010
    min_contact_points: int = 20

    def __post_init__(self):
        dims = (self.max_opening, self.finger_pad_width, self.finger_pad_height, self.finger_body_thickness)
        if min(dims) <= 0:
            raise ValueError("gripper dimensions must be positive")
        if self.min_contact_points < 1:
            raise ValueError("min_contact_points must be at least 1")

    def with_opening(self, opening: float) -> "GripperModel":
        return replace(self, max_opening=float(opening))


def roll_reference(finger_axis: np.ndarray, up: np.ndarray = CAMERA_UP) -> np.ndarray:
    """Zero-roll direction: ``up`` projected off the finger axis (camera right
    when the two are parallel)."""
    x = np.asarray(finger_axis, dtype=np.float64)
    for ref in (np.asarray(up, dtype=np.float64), CAMERA_RIGHT):
        r = ref - np.dot(ref, x) * x
        norm = np.linalg.norm(r)
        if norm > 1e-6:
            return r / norm
    # finger axis parallel to both references cannot happen for unit x
    raise ValueError("degenerate finger axis")


@dataclass(frozen=True, eq=False)
class GraspPose:
    anchor: np.ndarray
    finger_axis: np.ndarray
    roll: float = 0.0
    up: np.ndarray = field(default_factory=lambda: CAMERA_UP.copy())

    def __post_init__(self):
        a = np.asarray(self.finger_axis, dtype=np.float64)
        if abs(np.linalg.norm(a) - 1.0) > 1e-6:
            raise ValueError("finger axis must be unit length")
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=np.float64))
        object.__setattr__(self, "finger_axis", a)
        object.__setattr__(self, "up", np.asarray(self.up, dtype=np.float64))

    def frame(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(finger axis, pad-width axis, pad-height axis), right-handed."""
        x = self.finger_axis
        r0 = roll_reference(x, self.up)
        h = np.cos(self.roll) * r0 + np.sin(self.roll) * np.cross(x, r0)
        w = np.cross(h, x)
        return x, w, h


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    pose: GraspPose
    pixel: Tuple[int, int]
    feasible: bool
    width: float
    quality: float
    contact_points: int


ROLLS = np.arange(N_ROLLS) * (2 * np.pi / N_ROLLS)


@dataclass(frozen=True, eq=False)
class GraspMaps:
    """Rasters aligned with the entry image; outside ``mask`` all are zero.

    Per-anchor results are kept as arrays; ``candidates`` expands them into
    :class:`GraspCandidate` objects on first access.
    """

    feasibility: np.ndarray  # uint8 0/1
    quality: np.ndarray
    width: np.ndarray
    mask: np.ndarray
    center: Optional[np.ndarray] = None
    anchor_pixels: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))  # (v, u)
    anchors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    axes: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    roll_feasible: np.ndarray = field(default_factory=lambda: np.zeros((0, N_ROLLS), dtype=bool))
    roll_width: np.ndarray = field(default_factory=lambda: np.zeros((0, N_ROLLS)))
    roll_contacts: np.ndarray = field(default_factory=lambda: np.zeros((0, N_ROLLS), dtype=np.int64))
    anchor_quality: np.ndarray = field(default_factory=lambda: np.zeros(0))
    anchor_distance: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @cached_property
    def candidates(self) -> List[GraspCandidate]:
        out = []
        for i, (v, u) in enumerate(self.anchor_pixels):
            for k in range(N_ROLLS):
                ok = bool(self.roll_feasible[i, k])
                out.append(
                    GraspCandidate(
                        GraspPose(self.anchors[i], self.axes[i], float(ROLLS[k])),
                        (int(u), int(v)),
                        ok,
                        float(self.roll_width[i, k]) if ok else 0.0,
                        float(self.anchor_quality[i]) if ok else 0.0,
                        int(self.roll_contacts[i, k]),
                    )
                )
        return out


def estimate_normals(entry: DepthImage, cam: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    """Unit normals from central differences, oriented toward the camera.

    Returns (normals (H, W, 3), valid (H, W)); pixels without all four
    neighbors valid get a zero normal and ``valid=False``.
    """
    d = entry.data
    m = entry.mask
    p = cam.backproject_image(d)
    n = np.zeros_like(p)
    valid = np.zeros_like(m)
    ok = m[1:-1, 1:-1] & m[1:-1, 2:] & m[1:-1, :-2] & m[2:, 1:-1] & m[:-2, 1:-1]
    tu = p[1:-1, 2:] - p[1:-1, :-2]
    tv = p[2:, 1:-1] - p[:-2, 1:-1]
    c = np.cross(tu, tv)
    norm = np.linalg.norm(c, axis=-1)
    ok &= norm > 0
    c = c / np.where(norm > 0, norm, 1.0)[..., None]
    flip = np.einsum("ijk,ijk->ij", c, p[1:-1, 1:-1]) > 0
    c[flip] *= -1
    c[~ok] = 0.0
    n[1:-1, 1:-1] = c
    valid[1:-1, 1:-1] = ok
    return n, valid


def _column_radius(half_w: float, half_h: float) -> float:
    return float(np.hypot(half_w, half_h))


@dataclass(frozen=True, eq=False)
class PointGrid:
    """Uniform hash grid over a point set, points sorted by cell."""

    points: np.ndarray
    order: np.ndarray
    starts: np.ndarray
    lo: np.ndarray
    dims: np.ndarray
    cell: float


MAX_GRID_CELLS = 1 << 22


def build_point_grid(points: np.ndarray, cell: float) -> PointGrid:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if len(pts) == 0:
        raise ValueError("no object points")
    lo = pts.min(axis=0)
    extent = pts.max(axis=0) - lo
    # coarsen huge sparse clouds; correctness only needs cell >= the query radius
    while np.prod(np.floor(extent / cell) + 1) > MAX_GRID_CELLS:
        cell *= 2.0
    dims = (np.floor(extent / cell) + 1).astype(np.int64)
    ijk = np.minimum(((pts - lo) / cell).astype(np.int64), dims - 1)
    flat = (ijk[:, 0] * dims[1] + ijk[:, 1]) * dims[2] + ijk[:, 2]
    order = np.argsort(flat, kind="stable")
    starts = np.searchsorted(flat[order], np.arange(int(np.prod(dims)) + 1))
    return PointGrid(pts, order, starts.astype(np.int64), lo, dims, float(cell))


@numba.njit(cache=True)
def _evaluate_grid(points, order, starts, lo, dims, cell, anchors, axes, width_axes, height_axes,
                   openings, half_w, half_h, body, min_contacts):
    """Per (anchor, roll): feasible flag, width and contact count.

    Only grid cells near the finger axis line are visited: the line is
    sampled every radius/2 and the 3x3x3 cells around each sample are
    scanned once, which covers the whole column when cell >= 1.04 radius.
    """
    na, nr = width_axes.shape[0], width_axes.shape[1]
    feasible = np.zeros((na, nr), dtype=np.bool_)
    widths = np.zeros((na, nr))
    contacts = np.zeros((na, nr), dtype=np.int64)
    npts = points.shape[0]
    rad2 = half_w * half_w + half_h * half_h
    rad = np.sqrt(rad2)
    step = 0.5 * rad
    s_out = JAW_OFFSET
    s_top = s_out + body
    cand = np.empty(npts, dtype=np.int64)
    cand_s = np.empty(npts)
    stamp = np.zeros(dims[0] * dims[1] * dims[2], dtype=np.int64)
    for i in range(na):
        a0, a1, a2 = anchors[i, 0], anchors[i, 1], anchors[i, 2]
        ax = (axes[i, 0], axes[i, 1], axes[i, 2])
        # clip the axis line to the grid box grown by the column radius
        tlo, thi = -np.inf, s_top
        for d in range(3):
            blo = lo[d] - rad
            bhi = lo[d] + dims[d] * cell + rad
            o = anchors[i, d]
            if abs(ax[d]) < 1e-15:
                if o < blo or o > bhi:
                    tlo, thi = 1.0, 0.0
            else:
                t0 = (blo - o) / ax[d]
                t1 = (bhi - o) / ax[d]
                if t0 > t1:
                    t0, t1 = t1, t0
                tlo = max(tlo, t0)
                thi = min(thi, t1)
        nc = 0
        if tlo <= thi:
            nsteps = int(np.ceil((thi - tlo) / step))
            for q in range(nsteps + 1):
                t = min(tlo + q * step, thi)
                ci = int(np.floor((a0 + t * ax[0] - lo[0]) / cell))
                cj = int(np.floor((a1 + t * ax[1] - lo[1]) / cell))
                ck = int(np.floor((a2 + t * ax[2] - lo[2]) / cell))
                for ii in range(max(ci - 1, 0), min(ci + 2, dims[0])):
                    for jj in range(max(cj - 1, 0), min(cj + 2, dims[1])):
                        for kk in range(max(ck - 1, 0), min(ck + 2, dims[2])):
                            cid = (ii * dims[1] + jj) * dims[2] + kk
                            if stamp[cid] == i + 1:
                                continue
                            stamp[cid] = i + 1
                            for p in range(starts[cid], starts[cid + 1]):
                                j = order[p]
                                d0 = points[j, 0] - a0
                                d1 = points[j, 1] - a1
                                d2 = points[j, 2] - a2
                                s = d0 * ax[0] + d1 * ax[1] + d2 * ax[2]
                                if s > s_top:
                                    continue
                                if d0 * d0 + d1 * d1 + d2 * d2 - s * s <= rad2:
                                    cand[nc] = j
                                    cand_s[nc] = s
                                    nc += 1
        s_in = JAW_OFFSET - openings[i]
        for k in range(nr):
            w0, w1, w2 = width_axes[i, k, 0], width_axes[i, k, 1], width_axes[i, k, 2]
            h0, h1, h2 = height_axes[i, k, 0], height_axes[i, k, 1], height_axes[i, k, 2]
            count = 0
            smin = np.inf
            smax = -np.inf
            collide = False
            for c in range(nc):
                j = cand[c]
                d0 = points[j, 0] - a0
                d1 = points[j, 1] - a1
                d2 = points[j, 2] - a2
                if abs(d0 * w0 + d1 * w1 + d2 * w2) > half_w:
                    continue
                if abs(d0 * h0 + d1 * h1 + d2 * h2) > half_h:
                    continue
                s = cand_s[c]
                if s > s_out or s < s_in:
                    collide = True  # s <= s_top already holds
                else:
                    count += 1
                    if s < smin:
                        smin = s
                    if s > smax:
                        smax = s
            contacts[i, k] = count
            if count > 0:
                widths[i, k] = smax - smin
            feasible[i, k] = (
                (not collide) and count >= min_contacts and 0.0 < widths[i, k] <= openings[i] - JAW_CLEARANCE
            )
    return feasible, widths, contacts


def roll_frames(axes: np.ndarray, rolls: np.ndarray, ups: Optional[np.ndarray] = None):
    """Pad width and height axes for finger axes (A, 3) and rolls (A, R).

    Returns two (A, R, 3) arrays; matches :meth:`GraspPose.frame`.
    """
    axes = np.asarray(axes, dtype=np.float64).reshape(-1, 3)
    rolls = np.asarray(rolls, dtype=np.float64).reshape(len(axes), -1)
    ups = np.tile(CAMERA_UP, (len(axes), 1)) if ups is None else np.asarray(ups, dtype=np.float64).reshape(-1, 3)
    r0 = ups - np.einsum("ij,ij->i", ups, axes)[:, None] * axes
    norm = np.linalg.norm(r0, axis=1)
    bad = norm <= 1e-6
    if bad.any():
        alt = CAMERA_RIGHT - (axes[bad] @ CAMERA_RIGHT)[:, None] * axes[bad]
        r0[bad] = alt
        norm[bad] = np.linalg.norm(alt, axis=1)
    r0 = r0 / norm[:, None]
    r1 = np.cross(axes, r0)
    c, s = np.cos(rolls)[..., None], np.sin(rolls)[..., None]
    hs = c * r0[:, None, :] + s * r1[:, None, :]
    ws = np.cross(hs, np.broadcast_to(axes[:, None, :], hs.shape))
    return ws, hs


def evaluate_many(
    points: np.ndarray,
    anchors: np.ndarray,
    axes: np.ndarray,
    rolls: np.ndarray,
    openings: np.ndarray,
    gripper: GripperModel = GripperModel(),
    grid: Optional[PointGrid] = None,
    ups: Optional[np.ndarray] = None,
):
    """Batch evaluation: anchors/axes (A, 3), rolls (A, R), openings (A,).

    Returns feasible, width, contacts arrays of shape (A, R).
    """
    half_w, half_h = 0.5 * gripper.finger_pad_width, 0.5 * gripper.finger_pad_height
    if grid is None:
        grid = build_point_grid(points, 1.05 * _column_radius(half_w, half_h))
    anchors = np.ascontiguousarray(anchors, dtype=np.float64).reshape(-1, 3)
    axes = np.ascontiguousarray(axes, dtype=np.float64).reshape(-1, 3)
    ws, hs = roll_frames(axes, rolls, ups)
    return _evaluate_grid(
        grid.points, grid.order, grid.starts, grid.lo, grid.dims, grid.cell,
        anchors, axes, np.ascontiguousarray(ws), np.ascontiguousarray(hs),
        np.ascontiguousarray(openings, dtype=np.float64).reshape(-1),
        half_w, half_h, float(gripper.finger_body_thickness), int(gripper.min_contact_points),
    )


def evaluate_grasp(pose: GraspPose, object_points: PointCloud, gripper: GripperModel = GripperModel()):
    """Geometric feasibility of one grasp.

    Feasible iff at least ``min_contact_points`` object points lie inside the
    envelope between the jaws, their extent along the finger axis is positive
    and leaves 2 mm of clearance, and no point lies in the outer finger body or anywhere
    beyond the inner jaw plane (the inner jaw would sit inside the object).
    Returns (feasible, width, contact_points).
    """
    pts = object_points.points
    if len(pts) == 0:
        raise ValueError("no object points")
    x, w, h = pose.frame()
    d = pts - pose.anchor
    s = d @ x
    col = (np.abs(d @ w) <= 0.5 * gripper.finger_pad_width) & (np.abs(d @ h) <= 0.5 * gripper.finger_pad_height)
    s_out = JAW_OFFSET
    s_in = JAW_OFFSET - gripper.max_opening
    sc = s[col]
    inside = sc[(sc >= s_in) & (sc <= s_out)]
    collide = np.any((sc > s_out) & (sc <= s_out + gripper.finger_body_thickness)) or np.any(sc < s_in)
    count = len(inside)
    width = float(inside.max() - inside.min()) if count else 0.0
    feasible = (
        not collide and count >= gripper.min_contact_points and 0.0 < width <= gripper.max_opening - JAW_CLEARANCE
    )
    return bool(feasible), width, int(count)


def evaluate_grasps(poses: List[GraspPose], object_points: PointCloud, gripper: GripperModel = GripperModel()):
    """Vectorized :func:`evaluate_grasp` over poses; returns three arrays."""
    if not poses:
        return np.zeros(0, bool), np.zeros(0), np.zeros(0, dtype=np.int64)
    f, wd, c = evaluate_many(
        object_points.points,
        np.array([p.anchor for p in poses]),
        np.array([p.finger_axis for p in poses]),
        np.array([[p.roll] for p in poses]),
        np.full(len(poses), gripper.max_opening),
        gripper,
        ups=np.array([p.up for p in poses]),
    )
    return f[:, 0], wd[:, 0], c[:, 0]


def center_of_geometry(recon: TriangleMesh) -> np.ndarray:
    """Volume centroid, or the area-weighted surface centroid when the mesh
    encloses no volume."""
    try:
        return mesh_volume_centroid(recon)[1]
    except DegenerateVolumeError:
        return surface_centroid(recon)


def anchor_distances(anchors: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Distances to the center, rounded to 1e-12 m so that mirror-symmetric
    anchors (equal up to float noise) tie exactly."""
    return np.round(np.linalg.norm(anchors - center, axis=1), DISTANCE_DECIMALS)


def quality_from_distance(dist: np.ndarray) -> np.ndarray:
    """Min-max affine map: nearest anchor scores 1, farthest 0."""
    if len(dist) == 0:
        return dist.copy()
    lo, hi = dist.min(), dist.max()
    if hi == lo:
        return np.ones_like(dist)
    return 1.0 - (dist - lo) / (hi - lo)


def anchor_pixels(valid_normals: np.ndarray, stride: int) -> np.ndarray:
    """(v, u) of grid pixels (both coordinates multiples of stride) with a valid normal."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    grid = np.zeros_like(valid_normals)
    grid[::stride, ::stride] = True
    return np.argwhere(grid & valid_normals)


def compute_grasp_maps(
    shell: ObjectShell,
    gripper: GripperModel = GripperModel(),
    stride: int = 4,
    depth_discontinuity: float = DEFAULT_DISCONTINUITY,
) -> GraspMaps:
    """Feasibility, quality and width maps for a shell.

    A pixel is feasible if any of the eight rolls is; its width is the
    smallest feasible width. Quality is the min-max normalized inverse of the
    anchor's distance to the reconstruction's center of geometry.
    """
    cam = shell.camera
    mask = shell.mask
    h, w = cam.shape
    feas = np.zeros((h, w), dtype=np.uint8)
    qual = np.zeros((h, w))
    width = np.zeros((h, w))
    if not mask.any():
        return GraspMaps(feas, qual, width, mask)

    normals, nvalid = estimate_normals(shell.entry, cam)
    pix = anchor_pixels(nvalid, stride)
    center = center_of_geometry(stitch_shell(shell, depth_discontinuity))
    if len(pix) == 0:
        return GraspMaps(feas, qual, width, mask, center)

    pts = cam.backproject_image(shell.entry.data)
    anchors = pts[pix[:, 0], pix[:, 1]]
    axes = normals[pix[:, 0], pix[:, 1]]
    cloud = shell_to_pointcloud(shell)
    rolls = np.tile(ROLLS, (len(pix), 1))
    f, wd, cnt = evaluate_many(cloud.points, anchors, axes, rolls, np.full(len(pix), gripper.max_opening), gripper)
    wd = np.where(f, wd, 0.0)

    any_f = f.any(axis=1)
    a_width = np.where(f, wd, np.inf).min(axis=1)
    a_width[~any_f] = 0.0
    dist = anchor_distances(anchors, center)
    a_qual = np.zeros(len(pix))
    a_qual[any_f] = quality_from_distance(dist[any_f])

    # fill mask pixels from the nearest anchor
    seed = np.zeros((h, w), dtype=bool)
    seed[pix[:, 0], pix[:, 1]] = True
    _, (iv, iu) = ndimage.distance_transform_edt(~seed, return_indices=True)
    slot = np.full((h, w), -1, dtype=np.int64)
    slot[pix[:, 0], pix[:, 1]] = np.arange(len(pix))
    nearest = slot[iv, iu]
    feas[mask] = any_f[nearest[mask]]
    qual[mask] = a_qual[nearest[mask]]
    width[mask] = a_width[nearest[mask]]
    return GraspMaps(feas, qual, width, mask, center, pix, anchors, axes, f, wd, cnt, a_qual, dist)
