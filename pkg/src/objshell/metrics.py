"""Reconstruction and grasp evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.spatial import cKDTree

from objshell.geometry import PointCloud, TriangleMesh
from objshell.grasp import GraspCandidate, GraspMaps, GripperModel, evaluate_many
from objshell.rng import RngStream

DEFAULT_SAMPLES = 10_000
DEFAULT_CLEARANCE = 0.015
# Ground-truth samples per square meter for precision checks (1 per mm^2).
GT_DENSITY = 1e6


@dataclass(frozen=True)
class ChamferResult:
    forward: float
    backward: float

    @property
    def sum(self) -> float:
        return self.forward + self.backward


@dataclass(frozen=True)
class MapMetrics:
    accuracy: float
    f1: float
    quality_rmse: float
    quality_rmse_high: float


def sample_surface(mesh: TriangleMesh, n: int, stream: RngStream) -> PointCloud:
    """Area-weighted uniform samples with face normals."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(mesh.triangles) == 0:
        raise ValueError("cannot sample an empty mesh")
    rng = stream.generator()
    area = mesh.areas()
    tri = rng.choice(len(area), size=n, p=area / area.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.triangles[tri, i]] for i in range(3))
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    nrm = np.cross(b - a, c - a)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return PointCloud(pts, nrm)


def chamfer(a: PointCloud, b: PointCloud, squared: bool = False) -> ChamferResult:
    """Mean nearest-neighbor Euclidean distance in both directions
    (mean squared distance with ``squared``)."""
    pa, pb = np.asarray(a.points), np.asarray(b.points)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("chamfer needs non-empty clouds")
    fwd, _ = cKDTree(pb).query(pa)
    bwd, _ = cKDTree(pa).query(pb)
    if squared:
        fwd, bwd = fwd**2, bwd**2
    return ChamferResult(float(np.mean(fwd)), float(np.mean(bwd)))


def mesh_chamfer(
    a: TriangleMesh, b: TriangleMesh, samples: int = DEFAULT_SAMPLES, seed: int = 0, squared: bool = False
) -> ChamferResult:
    """Chamfer between surface samples of two meshes.

    Both meshes are sampled from the same stream, so identical meshes give
    identical clouds and an exact zero.
    """
    s = RngStream(seed).child("surface")
    return chamfer(sample_surface(a, samples, s), sample_surface(b, samples, s), squared)


def format_table(x: float, digits: int = 1) -> str:
    """Scientific notation without exponent padding, e.g. 7.8e-3."""
    if x == 0 or not math.isfinite(x):
        return f"{0.0 if x == 0 else x:.{digits}f}e0"
    exp = math.floor(math.log10(abs(x)))
    mant = round(x / 10**exp, digits)
    if abs(mant) >= 10:
        mant /= 10
        exp += 1
    return f"{mant:.{digits}f}e{exp}"


def grasp_precision(
    candidates: Iterable[GraspCandidate],
    gt_mesh: TriangleMesh,
    clearance: float = DEFAULT_CLEARANCE,
    gripper: GripperModel = GripperModel(),
    stream: Optional[RngStream] = None,
    density: float = GT_DENSITY,
) -> Optional[float]:
    """Fraction of feasible candidates that stay feasible on the ground truth.

    Each candidate is re-checked against dense ground-truth surface samples
    with the jaws opened to its estimated width plus ``clearance``. Returns
    None when there is no feasible candidate.
    """
    feasible = [c for c in candidates if c.feasible]
    if not feasible:
        return None
    stream = stream or RngStream(0)
    n = max(int(math.ceil(gt_mesh.areas().sum() * density)), 1)
    cloud = sample_surface(gt_mesh, n, stream.child("gt-precision"))
    f, _, _ = evaluate_many(
        cloud.points,
        np.array([c.pose.anchor for c in feasible]),
        np.array([c.pose.finger_axis for c in feasible]),
        np.array([[c.pose.roll] for c in feasible]),
        np.array([c.width + clearance for c in feasible]),
        gripper,
        ups=np.array([c.pose.up for c in feasible]),
    )
    return int(f.sum()) / len(feasible)


def map_metrics(pred: GraspMaps, gt: GraspMaps) -> MapMetrics:
    """Feasibility accuracy/F1 and quality RMSE against ground-truth maps.

    Feasibility is scored over the GT mask plus any pixel predicted feasible
    outside it (those count as false positives). Quality errors use GT-mask
    pixels only; the high-quality RMSE is 0 when no GT pixel reaches 0.75.
    """
    if pred.feasibility.shape != gt.feasibility.shape:
        raise ValueError("map sizes differ")
    pf = pred.feasibility.astype(bool)
    gf = gt.feasibility.astype(bool) & gt.mask
    domain = gt.mask | pf
    pf, gf = pf[domain], gf[domain]
    tp = int(np.count_nonzero(pf & gf))
    fp = int(np.count_nonzero(pf & ~gf))
    fn = int(np.count_nonzero(~pf & gf))
    total = int(domain.sum())
    accuracy = (total - fp - fn) / total if total else 1.0
    f1 = 1.0 if tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)

    err = (pred.quality - gt.quality)[gt.mask]
    rmse = float(np.sqrt(np.mean(err**2))) if err.size else 0.0
    high = gt.mask & (gt.quality >= 0.75)
    err_h = (pred.quality - gt.quality)[high]
    rmse_h = float(np.sqrt(np.mean(err_h**2))) if err_h.size else 0.0
    return MapMetrics(float(accuracy), float(f1), rmse, rmse_h)
