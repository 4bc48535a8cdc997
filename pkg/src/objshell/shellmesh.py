"""Shell to point cloud / closed mesh conversion.

Both shell layers are triangulated over pixel neighborhoods, then joined by
wall quads along the traced mask contours. Every step is linear in the
number of valid pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numba
import numpy as np
from scipy import ndimage

from objshell.geometry import CameraModel, DepthImage, ObjectShell, PointCloud, TriangleMesh

DEFAULT_DISCONTINUITY = 0.02

_EIGHT = np.ones((3, 3), dtype=bool)
_FOUR = ndimage.generate_binary_structure(2, 1)

# Clockwise on screen (rows grow downward), starting west.
_DR = np.array([0, -1, -1, -1, 0, 1, 1, 1], dtype=np.int64)
_DC = np.array([-1, -1, 0, 1, 1, 1, 0, -1], dtype=np.int64)


class DegenerateVolumeError(ValueError):
    """Mesh encloses (numerically) no volume."""


@dataclass(frozen=True, eq=False)
class BoundaryContour:
    """Closed 8-connected pixel loop, columns (u, v).

    Outer contours have positive shoelace area in (u, v) coordinates;
    hole contours run the opposite way.
    """

    uv: np.ndarray
    is_hole: bool = False

    def __len__(self):
        return len(self.uv)

    def signed_area(self) -> float:
        u, v = self.uv[:, 0].astype(float), self.uv[:, 1].astype(float)
        return 0.5 * float(np.sum(u * np.roll(v, -1) - np.roll(u, -1) * v))


def shell_to_pointcloud(shell: ObjectShell) -> PointCloud:
    """One backprojected point per valid pixel per layer (entry points first)."""
    m = shell.mask
    v, u = np.nonzero(m)
    cam = shell.camera
    pts = []
    for layer in (shell.entry, shell.exit):
        z = layer.data[m]
        pts.append(np.column_stack([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z]))
    return PointCloud(np.concatenate(pts) if len(u) else np.zeros((0, 3)))


def _pixel_triangles(depth: np.ndarray, valid: np.ndarray, disc: float) -> np.ndarray:
    """Triangles over 2x2 pixel blocks as flat pixel indices, oriented with
    positive (u, v) winding (normal pointing away from the camera).

    Fully valid blocks are split along the down-right diagonal; blocks with
    exactly three valid pixels contribute the one triangle they span. A
    triangle is kept only if its pairwise depth gaps are below ``disc``.
    """
    h, w = depth.shape
    if h < 2 or w < 2:
        return np.zeros((0, 3), dtype=np.int64)
    idx = np.arange(h * w).reshape(h, w)
    ia, ib, ic, id_ = idx[:-1, :-1], idx[:-1, 1:], idx[1:, :-1], idx[1:, 1:]
    va, vb, vc, vd = valid[:-1, :-1], valid[:-1, 1:], valid[1:, :-1], valid[1:, 1:]
    da, db, dc, dd = depth[:-1, :-1], depth[:-1, 1:], depth[1:, :-1], depth[1:, 1:]

    def close(x, y):
        return np.abs(x - y) < disc

    ab, ad, bd, ac, cd, bc = close(da, db), close(da, dd), close(db, dd), close(da, dc), close(dc, dd), close(db, dc)
    n_valid = va.astype(np.int8) + vb + vc + vd
    full = n_valid == 4
    three = n_valid == 3
    keep = np.stack(
        [
            (full | (three & ~vc)) & va & vb & vd & ab & ad & bd,
            (full | (three & ~vb)) & va & vd & vc & ad & cd & ac,
            three & ~va & vb & vd & vc & bd & cd & bc,
            three & ~vd & va & vb & vc & ab & bc & ac,
        ],
        axis=-1,
    )
    corners = np.stack(
        [
            np.stack([ia, ib, id_], axis=-1),
            np.stack([ia, id_, ic], axis=-1),
            np.stack([ib, id_, ic], axis=-1),
            np.stack([ia, ib, ic], axis=-1),
        ],
        axis=-2,
    )
    # boolean indexing walks blocks in row-major order, candidates in the
    # order listed, so no sort is needed
    return corners[keep]


def _crop(valid: np.ndarray) -> Tuple[slice, slice]:
    """Bounding box of the valid pixels grown by one pixel (clipped)."""
    h, w = valid.shape
    rows = np.flatnonzero(valid.any(axis=1))
    cols = np.flatnonzero(valid.any(axis=0))
    if len(rows) == 0:
        return slice(0, 0), slice(0, 0)
    return (
        slice(max(rows[0] - 1, 0), min(rows[-1] + 2, h)),
        slice(max(cols[0] - 1, 0), min(cols[-1] + 2, w)),
    )


def _layer_vertices(depth: np.ndarray, valid: np.ndarray, cam: CameraModel, r0: int = 0, c0: int = 0):
    """Backprojected valid pixels in raster order and a flat pixel -> vertex
    id table; ``(r0, c0)`` is the offset of a cropped raster."""
    v, u = np.nonzero(valid)
    z = depth[valid]
    verts = np.column_stack([(u + c0 - cam.cx) * z / cam.fx, (v + r0 - cam.cy) * z / cam.fy, z])
    vid = np.full(depth.shape, -1, dtype=np.int64)
    vid[valid] = np.arange(len(z))
    return verts, vid.reshape(-1)


def triangulate_layer(
    layer: DepthImage,
    cam: CameraModel,
    depth_discontinuity: float = DEFAULT_DISCONTINUITY,
    facing_camera: bool = True,
) -> TriangleMesh:
    """Triangulate one shell layer over its pixel grid.

    ``facing_camera=True`` winds triangles toward the camera (entry layer);
    ``False`` winds them away (exit layer).
    """
    rs, cs = _crop(layer.mask)
    d = layer.data[rs, cs]
    valid = d > 0
    verts, vid = _layer_vertices(d, valid, cam, rs.start, cs.start)
    tris = vid[_pixel_triangles(d, valid, depth_discontinuity)]
    if facing_camera:
        tris = tris[:, ::-1]
    return TriangleMesh(verts, tris)


@numba.njit(cache=True)
def _moore_trace(labels, lab, r0, c0, back, dr, dc):
    """Moore-neighbor trace from (r0, c0); the clockwise neighbor search
    starts after direction ``back``. Stops when the first move out of the
    start pixel repeats (Jacob's criterion)."""
    h, w = labels.shape
    out_r = [r0]
    out_c = [c0]
    r, c, b = r0, c0, back
    first_r, first_c = -1, -1
    limit = 4 * h * w + 8
    for _ in range(limit):
        found = -1
        for k in range(1, 9):
            j = (b + k) % 8
            rr, cc = r + dr[j], c + dc[j]
            if 0 <= rr < h and 0 <= cc < w and labels[rr, cc] == lab:
                found = j
                break
        if found < 0:
            break  # isolated pixel
        nr, nc = r + dr[found], c + dc[found]
        if r == r0 and c == c0:
            if first_r < 0:
                first_r, first_c = nr, nc
            elif nr == first_r and nc == first_c:
                break
        # new backtrack: the last outside neighbor examined, seen from the new pixel
        pj = (found + 7) % 8
        br, bc = r + dr[pj] - nr, c + dc[pj] - nc
        nb = 0
        for j in range(8):
            if dr[j] == br and dc[j] == bc:
                nb = j
                break
        out_r.append(nr)
        out_c.append(nc)
        r, c, b = nr, nc, nb
    n = len(out_r)
    if n > 1 and out_r[n - 1] == r0 and out_c[n - 1] == c0:
        n -= 1
    return np.array(out_r[:n]), np.array(out_c[:n])


def _first_pixels(labels: np.ndarray) -> np.ndarray:
    """Flat index of each label's first pixel in raster order (labels 1..n)."""
    flat = labels.reshape(-1)
    nz = np.flatnonzero(flat)
    return nz[np.unique(flat[nz], return_index=True)[1]]


def trace_boundary(mask: np.ndarray, include_holes: bool = False) -> List[BoundaryContour]:
    """Moore-neighbor contours, one per 8-connected component.

    Components are ordered by their first pixel in raster order, which is
    also where each trace starts. With ``include_holes`` every enclosed
    background region contributes an inner contour after its component's
    outer one.
    """
    mask = np.asarray(mask, dtype=bool)
    w = mask.shape[1]
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return []
    holes_by_comp = {}
    if include_holes:
        bg, nb = ndimage.label(~mask, structure=_FOUR)
        if nb:
            border = set(np.concatenate([bg[0], bg[-1], bg[:, 0], bg[:, -1]]).tolist())
            for lab, fi in zip(range(1, nb + 1), _first_pixels(bg)):
                if lab in border:
                    continue
                r, c = divmod(int(fi), w)
                # the west neighbor of a hole's first pixel is foreground
                holes_by_comp.setdefault(labels[r, c - 1], []).append((r, c))
    first_idx = _first_pixels(labels)
    contours = []
    for lab, fi in zip(range(1, n + 1), first_idx):
        r0, c0 = divmod(int(fi), w)
        rr, cc = _moore_trace(labels, lab, r0, c0, 0, _DR, _DC)
        contours.append(BoundaryContour(np.column_stack([cc, rr])))
        for hr, hc in holes_by_comp.get(lab, []):
            # start just west of the hole; its east neighbor is the hole pixel
            rr, cc = _moore_trace(labels, lab, hr, hc - 1, 4, _DR, _DC)
            contours.append(BoundaryContour(np.column_stack([cc, rr]), is_hole=True))
    return contours


def stitch_shell(shell: ObjectShell, depth_discontinuity: float = DEFAULT_DISCONTINUITY) -> TriangleMesh:
    """Closed mesh from both layers plus boundary walls."""
    n = shell.entry.valid_count()
    if n == 0:
        raise ValueError("empty shell")
    cam = shell.camera
    # all work happens inside the padded bounding box of the mask
    rs, cs = _crop(shell.mask)
    entry, exit_ = shell.entry.data[rs, cs], shell.exit.data[rs, cs]
    valid = shell.mask[rs, cs]
    ev, vid = _layer_vertices(entry, valid, cam, rs.start, cs.start)
    xv, _ = _layer_vertices(exit_, valid, cam, rs.start, cs.start)
    e_tris = vid[_pixel_triangles(entry, valid, depth_discontinuity)][:, ::-1]
    x_tris = vid[_pixel_triangles(exit_, valid, depth_discontinuity)] + n

    w = valid.shape[1]
    steps = []
    for contour in trace_boundary(valid, include_holes=True):
        if len(contour) < 2:
            continue
        p = vid[contour.uv[:, 1] * w + contour.uv[:, 0]]
        steps.append(np.column_stack([p, np.roll(p, -1)]))
    steps = np.concatenate(steps) if steps else np.zeros((0, 2), dtype=np.int64)
    # one-pixel-wide spurs are walked out and back; the two opposite quads
    # would form a zero-volume fin, so both are dropped
    key = steps[:, 0] * n + steps[:, 1]
    steps = steps[~np.isin(key, steps[:, 1] * n + steps[:, 0])]
    p, q = steps[:, 0], steps[:, 1]
    wall_tris = np.concatenate([np.column_stack([p, q, q + n]), np.column_stack([p, q + n, p + n])])
    return TriangleMesh(np.concatenate([ev, xv]), np.concatenate([e_tris, x_tris, wall_tris]))


def mesh_volume_centroid(mesh: TriangleMesh) -> Tuple[float, np.ndarray]:
    """Divergence-theorem volume and volume centroid.

    Raises DegenerateVolumeError when |volume| < 1e-9 m^3.
    """
    v = mesh.vertices
    a, b, c = (v[mesh.triangles[:, i]] for i in range(3))
    # tetrahedra against the vertex mean keep the sums well conditioned
    ref = v.mean(axis=0) if len(v) else np.zeros(3)
    a, b, c = a - ref, b - ref, c - ref
    vol6 = np.einsum("ij,ij->i", a, np.cross(b, c))
    volume = vol6.sum() / 6.0
    if abs(volume) < 1e-9:
        raise DegenerateVolumeError(f"enclosed volume {volume:.3e} m^3 too small")
    centroid = (vol6[:, None] * (a + b + c)).sum(axis=0) / (4.0 * vol6.sum()) + ref
    return float(volume), centroid


def surface_centroid(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted mean of triangle centroids."""
    area = mesh.areas()
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    return (area[:, None] * cent).sum(axis=0) / area.sum()
