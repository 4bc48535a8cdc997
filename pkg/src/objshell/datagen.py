"""Synthetic training data: random primitive shapes, random placement,
mesh jitter, sensor-style depth dropout and per-sample ground truth."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage, sparse

from objshell import io
from objshell.geometry import CameraModel, DepthImage, Pose, TriangleMesh, quaternion_to_matrix
from objshell.grasp import GripperModel, compute_grasp_maps, estimate_normals
from objshell.primitives import box, cylinder
from objshell.raycast import extract_shell
from objshell.rng import RngStream, derive_seed

log = logging.getLogger(__name__)

MAX_RATIO = 7.0
SIDE_RANGE = (0.05, 0.35)
PLACEMENT_CENTER = np.array([0.0, 0.0, 0.75])
PLACEMENT_RADIUS = 0.25
MAX_SHRINK = 0.8
MAX_PROTRUSION = 0.2

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class ShapeSpec:
    base: str  # "cube" | "cylinder"
    squish: Tuple[float, float, float]
    max_side: float
    modifier: Optional[str] = None  # None | "shrink" | "protrusion"
    shrink_fraction: float = 0.0
    plane_normal: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    plane_offset: float = 0.0
    protrusion_vertex: int = 0
    protrusion_amplitude: float = 0.0
    protrusion_sigma: float = 0.0


def _unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def base_mesh(kind: str) -> TriangleMesh:
    """Unit-sized base shape, finely tessellated so modifiers deform smoothly."""
    if kind == "cube":
        return box((1.0, 1.0, 1.0), subdivisions=13)
    if kind == "cylinder":
        return cylinder(0.5, 1.0, segments=64, rings=8, cap_rings=4)
    raise ValueError(f"unknown base shape {kind!r}")


def sample_shape_spec(stream: RngStream) -> ShapeSpec:
    rng = stream.generator()
    base = "cube" if rng.random() < 0.5 else "cylinder"
    squish = tuple(float(x) for x in np.exp(rng.uniform(0.0, np.log(MAX_RATIO), size=3)))
    max_side = float(rng.uniform(*SIDE_RANGE))
    if rng.random() >= 0.5:
        return ShapeSpec(base, squish, max_side)
    if rng.random() < 0.5:
        return ShapeSpec(
            base,
            squish,
            max_side,
            modifier="shrink",
            shrink_fraction=float(rng.uniform(0.1, MAX_SHRINK)),
            plane_normal=tuple(_unit_vector(rng)),
            plane_offset=float(rng.uniform(-0.3, 0.3)),
        )
    return ShapeSpec(
        base,
        squish,
        max_side,
        modifier="protrusion",
        protrusion_vertex=int(rng.integers(1 << 30)),
        protrusion_amplitude=float(min(rng.uniform(0.1, 0.5) * max_side, MAX_PROTRUSION)),
        protrusion_sigma=float(rng.uniform(0.1, 0.3) * max_side),
    )


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    v, t = mesh.vertices, mesh.triangles
    fn = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])  # area weighted
    n = np.zeros_like(v)
    for i in range(3):
        np.add.at(n, t[:, i], fn)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return n / np.where(norm > 0, norm, 1.0)


def enforce_bounds(vertices: np.ndarray) -> np.ndarray:
    """Center the bounding box, cap the side ratio at 1:7 and clamp the
    largest side into [0.05, 0.35] m."""
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    v = vertices - 0.5 * (lo + hi)
    ext = hi - lo
    floor = ext.max() / MAX_RATIO
    v = v * np.where(ext < floor, floor / np.maximum(ext, 1e-12), 1.0)
    side = (v.max(axis=0) - v.min(axis=0)).max()
    target = min(max(side, SIDE_RANGE[0]), SIDE_RANGE[1])
    return v * (target / side)


def build_shape(spec: ShapeSpec) -> TriangleMesh:
    mesh = base_mesh(spec.base)
    v = mesh.vertices * np.asarray(spec.squish)
    side = (v.max(axis=0) - v.min(axis=0)).max()
    v = v * (spec.max_side / side)
    v = v - 0.5 * (v.min(axis=0) + v.max(axis=0))
    if spec.modifier == "shrink":
        n = np.asarray(spec.plane_normal)
        proj = v @ n
        # plane placed within the middle of the shape's extent along n
        c = spec.plane_offset * (proj.max() - proj.min())
        s = proj - c
        moved = s > 0
        v = v.copy()
        v[moved] -= spec.shrink_fraction * s[moved, None] * n
    elif spec.modifier == "protrusion":
        vn = vertex_normals(TriangleMesh(v, mesh.triangles))
        c = v[spec.protrusion_vertex % len(v)]
        r2 = np.sum((v - c) ** 2, axis=1)
        bump = spec.protrusion_amplitude * np.exp(-r2 / (2 * spec.protrusion_sigma**2))
        v = v + bump[:, None] * vn
    return TriangleMesh(enforce_bounds(v), mesh.triangles)


def gen_shape(stream: RngStream) -> TriangleMesh:
    return build_shape(sample_shape_spec(stream))


def random_rotation(rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform rotation from a normalized Gaussian quaternion; returns (R, q)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return quaternion_to_matrix(q), q


def place_shape(mesh: TriangleMesh, stream: RngStream, rotate: bool = True) -> Tuple[TriangleMesh, Pose]:
    """Random orientation; bounding-box center uniform in the 0.5 m sphere at 0.75 m."""
    rng = stream.generator()
    rot, _ = random_rotation(rng)
    if not rotate:
        rot = np.eye(3)
    direction = _unit_vector(rng)
    center = PLACEMENT_CENTER + direction * PLACEMENT_RADIUS * rng.random() ** (1.0 / 3.0)
    rotated = mesh.vertices @ rot.T
    lo, hi = rotated.min(axis=0), rotated.max(axis=0)
    pose = Pose(rot, center - 0.5 * (lo + hi))
    return mesh.transformed(pose), pose


def jitter_vertices(
    mesh: TriangleMesh,
    stream: RngStream,
    noise_range: Tuple[float, float] = (0.001, 0.010),
    subset_range: Tuple[float, float] = (0.3, 1.0),
) -> TriangleMesh:
    """Offset a random vertex subset; each axis moves by a magnitude drawn
    uniformly from ``noise_range`` with a random sign."""
    rng = stream.generator()
    n = len(mesh.vertices)
    frac = rng.uniform(*subset_range)
    chosen = rng.random(n) < frac
    mag = rng.uniform(noise_range[0], noise_range[1], size=(n, 3))
    sign = rng.choice([-1.0, 1.0], size=(n, 3))
    offset = np.where(chosen[:, None], mag * sign, 0.0)
    return TriangleMesh(mesh.vertices + offset, mesh.triangles)


def laplacian_smooth(mesh: TriangleMesh, rounds: int = 3, step: float = 0.5) -> TriangleMesh:
    """Uniform umbrella smoothing; topology unchanged."""
    t = mesh.triangles
    n = len(mesh.vertices)
    i = np.concatenate([t[:, 0], t[:, 1], t[:, 2], t[:, 1], t[:, 2], t[:, 0]])
    j = np.concatenate([t[:, 1], t[:, 2], t[:, 0], t[:, 0], t[:, 1], t[:, 2]])
    adj = sparse.coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n)).tocsr()
    adj.data[:] = 1.0  # duplicate edges collapse to 1
    deg = np.asarray(adj.sum(axis=1)).ravel()
    v = mesh.vertices.copy()
    for _ in range(rounds):
        avg = (adj @ v) / np.where(deg > 0, deg, 1.0)[:, None]
        v = np.where(deg[:, None] > 0, v + step * (avg - v), v)
    return TriangleMesh(v, t)


def prerender_augment(
    mesh: TriangleMesh,
    stream: RngStream,
    noise_range: Tuple[float, float] = (0.001, 0.010),
    smoothing_rounds: int = 3,
) -> TriangleMesh:
    return laplacian_smooth(jitter_vertices(mesh, stream, noise_range), smoothing_rounds)


@dataclass(frozen=True)
class AugmentParams:
    mult_sigma: float = 0.005
    add_sigma: float = 0.001
    theta_deg: Tuple[float, float] = (5.0, 20.0)
    pepper_max: int = 10
    erosion_rounds: Tuple[int, int] = (5, 20)
    erosion_prob: float = 0.3
    coarse_rounds: int = 3
    exempt_max: int = 10


@dataclass
class ErosionRound:
    coarse: bool
    valid_before: np.ndarray  # at the round's resolution
    border: np.ndarray
    removed: np.ndarray


@dataclass
class AugmentTrace:
    """Intermediate masks of one post-render augmentation, for auditing."""

    noisy: Optional[np.ndarray] = None
    theta_deg: float = 0.0
    angle_removed: Optional[np.ndarray] = None
    pepper_removed: Optional[np.ndarray] = None
    rounds: List[ErosionRound] = field(default_factory=list)
    exempted: Optional[np.ndarray] = None
    crop: Optional[Tuple[slice, slice]] = None  # region the erosion rounds cover


def angle_dropout(depth: np.ndarray, cam: CameraModel, theta_deg: float) -> np.ndarray:
    """Mask of pixels whose surface normal is more than 90-theta degrees from
    the viewing direction. Pixels without a normal are kept."""
    normals, ok = estimate_normals(DepthImage(depth), cam)
    rays = cam.pixel_directions()
    cos = -np.einsum("ijk,ijk->ij", normals, rays)
    limit = np.cos(np.deg2rad(90.0 - theta_deg))
    return ok & (cos < limit)


def border_pixels(valid: np.ndarray) -> np.ndarray:
    """Valid pixels with at least one invalid 8-neighbor (outside the image
    does not count as invalid)."""
    return valid & ndimage.binary_dilation(~valid, structure=_EIGHT, border_value=0)


def _erosion_round(valid: np.ndarray, rng: np.random.Generator, prob: float):
    border = border_pixels(valid)
    idx = np.flatnonzero(border)
    drop = rng.random(len(idx)) < prob
    removed = np.zeros_like(valid)
    removed.reshape(-1)[idx[drop]] = True
    return border, removed


def border_erosion(
    valid: np.ndarray,
    rng: np.random.Generator,
    rounds: int,
    prob: float = 0.3,
    coarse_rounds: int = 3,
    history: Optional[List[ErosionRound]] = None,
) -> np.ndarray:
    """Stochastic boundary erosion; the first ``coarse_rounds`` rounds act on
    2x2 blocks (a block is valid if any of its pixels is)."""
    h, w = valid.shape
    valid = valid.copy()
    for r in range(rounds):
        if r < coarse_rounds:
            ph, pw = h + h % 2, w + w % 2
            padded = np.zeros((ph, pw), dtype=bool)
            padded[:h, :w] = valid
            coarse = padded.reshape(ph // 2, 2, pw // 2, 2).any(axis=(1, 3))
            border, removed = _erosion_round(coarse, rng, prob)
            fine = np.repeat(np.repeat(removed, 2, axis=0), 2, axis=1)[:h, :w]
            if history is not None:
                history.append(ErosionRound(True, coarse, border, removed))
            valid &= ~fine
        else:
            border, removed = _erosion_round(valid, rng, prob)
            if history is not None:
                history.append(ErosionRound(False, valid.copy(), border, removed))
            valid &= ~removed
    return valid


def postrender_augment(
    depth: DepthImage,
    stream: RngStream,
    cam: Optional[CameraModel] = None,
    params: AugmentParams = AugmentParams(),
    trace: Optional[AugmentTrace] = None,
) -> DepthImage:
    """Gaussian noise, angle dropout, pepper, border erosion, exemption.

    ``cam`` defaults to a centered camera of the image's size.
    """
    if cam is None:
        cam = CameraModel.default(depth.width, depth.height)
    rng = stream.generator()
    d = depth.data
    valid0 = depth.mask
    if not valid0.any():
        return DepthImage(np.zeros_like(d))

    n = int(valid0.sum())
    noisy = np.zeros_like(d)
    noisy[valid0] = d[valid0] * rng.normal(1.0, params.mult_sigma, n) + rng.normal(0.0, params.add_sigma, n)
    noisy[valid0] = np.maximum(noisy[valid0], 1e-6)

    # surface angles come from the clean render; per-pixel noise of a few
    # millimeters would otherwise dominate the central differences
    theta = float(rng.uniform(*params.theta_deg))
    angle_rm = angle_dropout(d, cam, theta)
    valid = valid0 & ~angle_rm

    k = int(rng.integers(0, params.pepper_max + 1))
    idx = np.flatnonzero(valid)
    pepper_rm = np.zeros_like(valid)
    if len(idx):
        pepper_rm.reshape(-1)[rng.choice(idx, size=min(k, len(idx)), replace=False)] = True
    valid &= ~pepper_rm

    # erode inside the padded bounding box; an even origin keeps coarse
    # blocks aligned with the full image
    rows, cols = np.nonzero(valid0)
    r0, c0 = max(int(rows.min()) - 2, 0) & ~1, max(int(cols.min()) - 2, 0) & ~1
    crop = (slice(r0, int(rows.max()) + 3), slice(c0, int(cols.max()) + 3))
    rounds = int(rng.integers(params.erosion_rounds[0], params.erosion_rounds[1] + 1))
    history = trace.rounds if trace is not None else None
    eroded = border_erosion(valid[crop], rng, rounds, params.erosion_prob, min(params.coarse_rounds, rounds), history)
    valid = np.zeros_like(valid)
    valid[crop] = eroded

    removed = np.flatnonzero(valid0 & ~valid)
    e = int(rng.integers(0, params.exempt_max + 1))
    exempt = rng.choice(removed, size=min(e, len(removed)), replace=False) if len(removed) else removed
    valid.reshape(-1)[exempt] = True

    if trace is not None:
        trace.noisy = noisy
        trace.theta_deg = theta
        trace.angle_removed = angle_rm
        trace.pepper_removed = pepper_rm
        trace.exempted = np.zeros_like(valid)
        trace.exempted.reshape(-1)[exempt] = True
        trace.crop = crop
    return DepthImage(np.where(valid, noisy, 0.0))


# -- dataset ----------------------------------------------------------------

DATASET_WIDTH, DATASET_HEIGHT = 320, 240
SAMPLE_FILES = ("input.dmap", "entry.dmap", "exit.dmap", "feas.pgm", "qual.pgm", "cam.txt")


@dataclass(frozen=True)
class DatasetConfig:
    camera: CameraModel = field(default_factory=lambda: CameraModel.default(DATASET_WIDTH, DATASET_HEIGHT))
    gripper: GripperModel = GripperModel()
    stride: int = 4
    augment: AugmentParams = AugmentParams()


def render_sample(shape_seed: int, view_seed: int, config: DatasetConfig):
    """Everything for one sample, as in-memory arrays."""
    mesh = gen_shape(RngStream(shape_seed))
    view = RngStream(view_seed)
    posed, pose = place_shape(mesh, view.child("place"))
    aug = prerender_augment(posed, view.child("prerender"))
    shell = extract_shell(aug, config.camera)
    noisy = postrender_augment(shell.entry, view.child("postrender"), config.camera, config.augment)
    maps = compute_grasp_maps(shell, config.gripper, config.stride)
    return noisy, shell, maps, pose


def _write_sample(job):
    sid, shape_seed, view_seed, out_dir, config = job
    noisy, shell, maps, _ = render_sample(shape_seed, view_seed, config)
    d = Path(out_dir) / sid
    d.mkdir(parents=True, exist_ok=True)
    io.write_dmap(d / "input.dmap", noisy)
    io.write_dmap(d / "entry.dmap", shell.entry)
    io.write_dmap(d / "exit.dmap", shell.exit)
    io.write_pgm(d / "feas.pgm", maps.feasibility * 255, 255)
    io.write_pgm(d / "qual.pgm", np.rint(maps.quality * 65535), 65535)
    io.write_camera(d / "cam.txt", config.camera)
    return sid


def sample_plan(n_shapes: int, views_per_shape: int, seed: int):
    """(id, shape_seed, view_seed) for every sample, in manifest order."""
    root = RngStream(seed)
    plan = []
    for i in range(n_shapes):
        shape_seed = root.child("shape", i).seed
        for k in range(views_per_shape):
            plan.append((f"{i:05d}_{k:02d}", shape_seed, derive_seed(shape_seed, "view", k)))
    return plan


def gen_dataset(
    n_shapes: int,
    views_per_shape: int,
    out_dir,
    seed: int,
    jobs: int = 1,
    config: DatasetConfig = DatasetConfig(),
) -> List[Tuple[str, int, int]]:
    """Generate samples under ``out_dir`` and write ``manifest.txt``.

    On failure the manifest lists the samples completed so far, followed by
    a ``# incomplete`` line, and the error is re-raised.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = sample_plan(n_shapes, views_per_shape, seed)
    jobs_list = [(sid, s, v, str(out), config) for sid, s, v in plan]
    done: List[Tuple[str, int, int]] = []
    manifest = out / "manifest.txt"
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                for entry, _ in zip(plan, ex.map(_write_sample, jobs_list, chunksize=max(1, len(plan) // (4 * jobs)))):
                    done.append(entry)
        else:
            for entry, job in zip(plan, jobs_list):
                _write_sample(job)
                done.append(entry)
    except BaseException as exc:
        _write_manifest(manifest, done, incomplete=f"{type(exc).__name__}: {exc}")
        raise
    _write_manifest(manifest, done)
    log.info("wrote %d samples to %s", len(done), out)
    return done


def _write_manifest(path: Path, entries, incomplete: Optional[str] = None) -> None:
    lines = [f"{sid}\t{s}\t{v}" for sid, s, v in entries]
    if incomplete is not None:
        lines.append(f"# incomplete after {len(entries)} samples: {incomplete}")
    tmp = path.with_suffix(".tmp")
    tmp.write_text("".join(line + "\n" for line in lines))
    os.replace(tmp, path)
