"""Closed, outward-oriented primitive meshes."""

from __future__ import annotations

import numpy as np

from objshell.geometry import TriangleMesh


def weld(vertices: np.ndarray, triangles: np.ndarray, decimals: int = 10) -> TriangleMesh:
    """Merge coincident vertices (after rounding) and reindex triangles."""
    key = np.round(vertices, decimals)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    # keep first-occurrence order so output is stable
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    verts = vertices[first[order]]
    tris = rank[inverse.reshape(-1)][triangles]
    return TriangleMesh(verts, tris)


def icosphere(radius: float = 1.0, subdivisions: int = 4, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + 5.0**0.5) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        mids = verts[uniq[:, 0]] + verts[uniq[:, 1]]
        mids /= np.linalg.norm(mids, axis=1, keepdims=True)
        n = len(faces)
        m01, m12, m20 = (inv[i * n : (i + 1) * n] + len(verts) for i in range(3))
        a, b, c = faces.T
        faces = np.concatenate(
            [
                np.stack([a, m01, m20], 1),
                np.stack([b, m12, m01], 1),
                np.stack([c, m20, m12], 1),
                np.stack([m01, m12, m20], 1),
            ]
        )
        verts = np.concatenate([verts, mids])
    return TriangleMesh(verts * radius + np.asarray(center, dtype=np.float64), faces)


def _grid_face(origin, du, dv, n):
    s = np.linspace(0.0, 1.0, n + 1)
    gu, gv = np.meshgrid(s, s, indexing="ij")
    pts = origin + gu[..., None] * du + gv[..., None] * dv
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b, c, d = idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]
    tris = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return pts.reshape(-1, 3), tris


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), subdivisions: int = 1) -> TriangleMesh:
    """Axis-aligned box; each face is an n x n grid of quads."""
    sx, sy, sz = (0.5 * float(s) for s in size)
    n = max(int(subdivisions), 1)
    ex, ey, ez = np.eye(3)
    # (origin, du, dv) with du x dv pointing outward
    faces = [
        ((-1, -1, -1), 2 * ey, 2 * ex),
        ((-1, -1, 1), 2 * ex, 2 * ey),
        ((-1, -1, -1), 2 * ex, 2 * ez),
        ((-1, 1, -1), 2 * ez, 2 * ex),
        ((-1, -1, -1), 2 * ez, 2 * ey),
        ((1, -1, -1), 2 * ey, 2 * ez),
    ]
    verts, tris, off = [], [], 0
    for o, du, dv in faces:
        p, t = _grid_face(np.asarray(o, dtype=np.float64), du, dv, n)
        verts.append(p)
        tris.append(t + off)
        off += len(p)
    v = np.concatenate(verts) * np.array([sx, sy, sz]) + np.asarray(center, dtype=np.float64)
    return weld(v, np.concatenate(tris))


def cylinder(
    radius: float = 0.5,
    height: float = 1.0,
    segments: int = 64,
    rings: int = 1,
    cap_rings: int = 1,
    center=(0.0, 0.0, 0.0),
) -> TriangleMesh:
    """Capped cylinder along +z. ``rings``/``cap_rings`` subdivide side and caps."""
    theta = 2 * np.pi * np.arange(segments) / segments
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    verts = []
    zs = np.linspace(-height / 2, height / 2, rings + 1)
    for z in zs:
        verts.append(np.column_stack([radius * circle, np.full(segments, z)]))
    side = np.arange((rings + 1) * segments).reshape(rings + 1, segments)
    tris = []
    for i in range(rings):
        a, b = side[i], np.roll(side[i], -1)
        c, d = side[i + 1], np.roll(side[i + 1], -1)
        tris += [np.stack([a, b, d], 1), np.stack([a, d, c], 1)]
    n = (rings + 1) * segments
    for z, ring, sign in ((zs[-1], side[-1], 1), (zs[0], side[0], -1)):
        prev = ring
        for k in range(cap_rings - 1, 0, -1):
            r = radius * k / cap_rings
            verts.append(np.column_stack([r * circle, np.full(segments, z)]))
            cur = np.arange(n, n + segments)
            n += segments
            a, b = prev, np.roll(prev, -1)
            c, d = cur, np.roll(cur, -1)
            t1, t2 = np.stack([a, b, d], 1), np.stack([a, d, c], 1)
            if sign < 0:
                t1, t2 = t1[:, ::-1], t2[:, ::-1]
            tris += [t1, t2]
            prev = cur
        verts.append(np.array([[0.0, 0.0, z]]))
        centre = n
        n += 1
        fan = np.stack([prev, np.roll(prev, -1), np.full(segments, centre)], 1)
        tris.append(fan if sign > 0 else fan[:, ::-1])
    v = np.concatenate(verts) + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, np.concatenate(tris))


def cup(
    radius: float = 0.04,
    height: float = 0.09,
    wall: float = 0.005,
    segments: int = 48,
) -> TriangleMesh:
    """Thick-walled open cup along +z, opening at +z, bottom at z=0."""
    theta = 2 * np.pi * np.arange(segments) / segments
    c = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    ri = radius - wall
    rings = [
        (radius, 0.0),  # outer bottom
        (radius, height),  # outer top
        (ri, height),  # inner top
        (ri, wall),  # inner bottom
    ]
    verts = [np.column_stack([r * c, np.full(segments, z)]) for r, z in rings]
    idx = np.arange(4 * segments).reshape(4, segments)
    tris = []
    for i in range(3):
        a, b = idx[i], np.roll(idx[i], -1)
        cc, d = idx[i + 1], np.roll(idx[i + 1], -1)
        tris += [np.stack([a, b, d], 1), np.stack([a, d, cc], 1)]
    n = 4 * segments
    verts += [np.array([[0.0, 0.0, wall]]), np.array([[0.0, 0.0, 0.0]])]
    inner_c, outer_c = n, n + 1
    ring = idx[3]
    tris.append(np.stack([ring, np.roll(ring, -1), np.full(segments, inner_c)], 1))
    ring = idx[0]
    tris.append(np.stack([np.roll(ring, -1), ring, np.full(segments, outer_c)], 1))
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


def plane_grid(size: float = 1.0, n: int = 10, z: float = 0.0) -> TriangleMesh:
    """Open square grid in the plane z=const, normal -z (facing a camera at the origin)."""
    p, t = _grid_face(np.array([-size / 2, -size / 2, z]), np.array([0.0, size, 0.0]), np.array([size, 0.0, 0.0]), n)
    return TriangleMesh(p, t)
