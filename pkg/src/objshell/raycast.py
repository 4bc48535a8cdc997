"""BVH ray casting, depth rendering and ground-truth shell extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from objshell.geometry import CameraModel, DepthImage, ObjectShell, TriangleMesh

LEAF_SIZE = 4
T_MIN = 1e-9
MERGE_EPS = 1e-9
MAX_HITS = 256


@dataclass(frozen=True, eq=False)
class Bvh:
    """Flattened AABB tree. Node 0 is the root; leaves have ``count > 0``."""

    bmin: np.ndarray  # (K, 3)
    bmax: np.ndarray  # (K, 3)
    left: np.ndarray  # (K,) child index, -1 for leaves
    right: np.ndarray
    start: np.ndarray  # first slot in ``order`` for leaves
    count: np.ndarray
    order: np.ndarray  # slot -> original triangle id
    tri_verts: np.ndarray  # (M, 3, 3) triangle corners in slot order

    @property
    def node_count(self) -> int:
        return len(self.left)

    def leaves(self):
        return np.flatnonzero(self.count > 0)


def build_bvh(mesh: TriangleMesh) -> Bvh:
    """Median split on the longest box axis, leaves of at most 4 triangles."""
    if len(mesh.triangles) == 0:
        raise ValueError("cannot build a BVH over an empty mesh")
    tv = mesh.vertices[mesh.triangles]  # (M, 3, 3)
    tmin, tmax = tv.min(axis=1), tv.max(axis=1)
    cent = tv.mean(axis=1)
    order = np.arange(len(tv))

    bmin, bmax, left, right, start, count = [], [], [], [], [], []

    def new_node(lo, hi):
        ids = order[lo:hi]
        bmin.append(tmin[ids].min(axis=0))
        bmax.append(tmax[ids].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(lo)
        count.append(0)
        return len(left) - 1

    root = new_node(0, len(order))
    stack = [(root, 0, len(order))]
    while stack:
        node, lo, hi = stack.pop()
        n = hi - lo
        if n <= LEAF_SIZE:
            count[node] = n
            continue
        axis = int(np.argmax(bmax[node] - bmin[node]))  # first max wins ties
        ids = order[lo:hi]
        order[lo:hi] = ids[np.argsort(cent[ids, axis], kind="stable")]
        mid = lo + n // 2
        a = new_node(lo, mid)
        b = new_node(mid, hi)
        left[node], right[node] = a, b
        # push right first so the left subtree is processed first
        stack.append((b, mid, hi))
        stack.append((a, lo, mid))

    return Bvh(
        bmin=np.array(bmin),
        bmax=np.array(bmax),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        start=np.array(start, dtype=np.int64),
        count=np.array(count, dtype=np.int64),
        order=order.copy(),
        tri_verts=np.ascontiguousarray(tv[order]),
    )


@numba.njit(cache=True, error_model="numpy")
def _ray_setup(d):
    kz = 0
    if abs(d[1]) > abs(d[kz]):
        kz = 1
    if abs(d[2]) > abs(d[kz]):
        kz = 2
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sx = d[kx] / d[kz]
    sy = d[ky] / d[kz]
    sz = 1.0 / d[kz]
    return kx, ky, kz, sx, sy, sz


@numba.njit(cache=True, error_model="numpy")
def _hit_triangle(tri, o, kx, ky, kz, sx, sy, sz):
    """Watertight ray/triangle test; returns t or -1 on miss.

    Edge and vertex hits are reported by every triangle sharing them, so
    callers merge near-equal distances.
    """
    ax = tri[0, kx] - o[kx]
    ay = tri[0, ky] - o[ky]
    az = tri[0, kz] - o[kz]
    bx = tri[1, kx] - o[kx]
    by = tri[1, ky] - o[ky]
    bz = tri[1, kz] - o[kz]
    cx = tri[2, kx] - o[kx]
    cy = tri[2, ky] - o[ky]
    cz = tri[2, kz] - o[kz]
    ax -= sx * az
    ay -= sy * az
    bx -= sx * bz
    by -= sy * bz
    cx -= sx * cz
    cy -= sy * cz
    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax
    if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
        return -1.0
    det = u + v + w
    if det == 0.0:
        return -1.0
    t = (u * sz * az + v * sz * bz + w * sz * cz) / det
    return t


@numba.njit(cache=True, error_model="numpy")
def _box_hit(bmin, bmax, o, inv):
    t0 = 0.0
    t1 = np.inf
    for k in range(3):
        a = (bmin[k] - o[k]) * inv[k]
        b = (bmax[k] - o[k]) * inv[k]
        if a > b:
            a, b = b, a
        # NaN from 0*inf (ray in slab plane) must not reject the box
        if a == a and a > t0:
            t0 = a
        if b == b and b < t1:
            t1 = b
        if t0 > t1 * (1.0 + 1e-12) + 1e-12:
            return False
    return True


@numba.njit(cache=True)
def _merge_sorted(buf, n):
    buf[:n] = np.sort(buf[:n])
    if n == 0:
        return 0
    m = 1
    for i in range(1, n):
        if buf[i] - buf[m - 1] > MERGE_EPS:
            buf[m] = buf[i]
            m += 1
    return m


@numba.njit(cache=True, error_model="numpy")
def _ray_hits(bmin, bmax, left, right, start, count, tri_verts, o, d, buf):
    """Collect raw hit distances into ``buf``; returns the raw hit count."""
    kx, ky, kz, sx, sy, sz = _ray_setup(d)
    inv = 1.0 / d
    stack = np.empty(128, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    n = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _box_hit(bmin[node], bmax[node], o, inv):
            continue
        c = count[node]
        if c > 0:
            s = start[node]
            for i in range(s, s + c):
                t = _hit_triangle(tri_verts[i], o, kx, ky, kz, sx, sy, sz)
                if t > T_MIN and n < buf.shape[0]:
                    buf[n] = t
                    n += 1
        else:
            stack[sp] = right[node]
            sp += 1
            stack[sp] = left[node]
            sp += 1
    return n


@numba.njit(cache=True, error_model="numpy")
def _ray_hits_brute(tri_verts, o, d, buf):
    kx, ky, kz, sx, sy, sz = _ray_setup(d)
    n = 0
    for i in range(tri_verts.shape[0]):
        t = _hit_triangle(tri_verts[i], o, kx, ky, kz, sx, sy, sz)
        if t > T_MIN and n < buf.shape[0]:
            buf[n] = t
            n += 1
    return n


@numba.njit(cache=True, error_model="numpy")
def _cast_summary(bmin, bmax, left, right, start, count, tri_verts, origins, dirs):
    """Per ray: first hit, last hit, merged hit count and raw hit count."""
    nr = origins.shape[0]
    first = np.zeros(nr)
    last = np.zeros(nr)
    merged = np.zeros(nr, dtype=np.int64)
    raw = np.zeros(nr, dtype=np.int64)
    buf = np.empty(MAX_HITS)
    for r in range(nr):
        n = _ray_hits(bmin, bmax, left, right, start, count, tri_verts, origins[r], dirs[r], buf)
        raw[r] = n
        m = _merge_sorted(buf, n)
        merged[r] = m
        if m > 0:
            first[r] = buf[0]
            last[r] = buf[m - 1]
    return first, last, merged, raw


def _bvh_args(bvh: Bvh):
    return (bvh.bmin, bvh.bmax, bvh.left, bvh.right, bvh.start, bvh.count, bvh.tri_verts)


def intersect_ray(bvh: Bvh, origin, direction) -> np.ndarray:
    """Sorted, merged hit distances of one ray (empty when it misses)."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("ray direction must be unit length")
    buf = np.empty(MAX_HITS)
    n = _ray_hits(*_bvh_args(bvh), o, d, buf)
    m = _merge_sorted(buf, n)
    return buf[:m].copy()


def intersect_ray_brute(mesh: TriangleMesh, origin, direction) -> np.ndarray:
    """Same primitive test as :func:`intersect_ray`, over every triangle."""
    tv = np.ascontiguousarray(mesh.vertices[mesh.triangles])
    buf = np.empty(MAX_HITS)
    n = _ray_hits_brute(tv, np.asarray(origin, dtype=np.float64), np.asarray(direction, dtype=np.float64), buf)
    m = _merge_sorted(buf, n)
    return buf[:m].copy()


def raw_hit_count(bvh: Bvh, origin, direction) -> int:
    """Number of triangle hits before merging."""
    buf = np.empty(MAX_HITS)
    return int(_ray_hits(*_bvh_args(bvh), np.asarray(origin, float), np.asarray(direction, float), buf))


def cast_camera(mesh: TriangleMesh, cam: CameraModel, bvh: Bvh | None = None):
    """Cast one ray per pixel center.

    Returns (first_depth, last_depth, merged_count) rasters; depths are z
    values in the camera frame, zero where the ray misses.
    """
    h, w = cam.shape
    if len(mesh.triangles) == 0:
        z = np.zeros((h, w))
        return z, z.copy(), np.zeros((h, w), dtype=np.int64)
    if bvh is None:
        bvh = build_bvh(mesh)
    dirs = cam.pixel_directions().reshape(-1, 3)
    origins = np.zeros_like(dirs)
    first, last, merged, _ = _cast_summary(*_bvh_args(bvh), origins, dirs)
    dz = dirs[:, 2]
    first = (first * dz).reshape(h, w)
    last = (last * dz).reshape(h, w)
    return first, last, merged.reshape(h, w)


def render_depth(mesh: TriangleMesh, cam: CameraModel) -> DepthImage:
    first, _, _ = cast_camera(mesh, cam)
    return DepthImage(first)


def extract_shell(mesh: TriangleMesh, cam: CameraModel) -> ObjectShell:
    """First and last hit per pixel; non-monotone rays keep the outer hull."""
    first, last, _ = cast_camera(mesh, cam)
    return ObjectShell(DepthImage(first), DepthImage(last), cam)


def monotonicity_report(mesh: TriangleMesh, cam: CameraModel) -> float:
    """Fraction of occupied pixels whose ray crosses the surface more than twice."""
    _, _, merged = cast_camera(mesh, cam)
    occupied = np.count_nonzero(merged)
    if occupied == 0:
        return 0.0
    return float(np.count_nonzero(merged > 2)) / occupied
