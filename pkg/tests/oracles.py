"""Independent reference implementations used only by the tests.

These deliberately avoid the package's kernels: plain numpy, no BVH, no
spatial index.
"""

import numpy as np


def moller_trumbore(origin, direction, tris, eps=1e-12):
    """All hit distances t > 0 of one ray against (M, 3, 3) triangles, sorted."""
    o = np.asarray(origin, float)
    d = np.asarray(direction, float)
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    e1, e2 = v1 - v0, v2 - v0
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - v0
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ d) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-9)
    return np.sort(t[hit])


def sphere_ray_depths(cam, radius, center):
    """Analytic entry/exit z per pixel for a sphere; zeros where the ray misses."""
    d = cam.pixel_directions()
    c = np.asarray(center, float)
    b = np.einsum("ijk,k->ij", d, c)
    disc = b**2 - (c @ c - radius**2)
    hit = disc > 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    t0, t1 = b - root, b + root
    z0 = np.where(hit, t0 * d[..., 2], 0.0)
    z1 = np.where(hit, t1 * d[..., 2], 0.0)
    return z0, z1, hit


def brute_chamfer(a, b):
    """O(n^2) mean nearest-neighbor distances (forward, backward)."""
    dist = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return dist.min(axis=1).mean(), dist.min(axis=0).mean()


def spearman(x, y):
    """Spearman rank correlation without tie handling (inputs must be distinct)."""
    rx = np.argsort(np.argsort(x)).astype(float)
    ry = np.argsort(np.argsort(y)).astype(float)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx @ ry) / np.sqrt((rx @ rx) * (ry @ ry)))
