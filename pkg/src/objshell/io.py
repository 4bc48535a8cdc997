"""File formats: .dmap depth rasters, camera key=value files, OBJ meshes,
binary PGM images and grasp candidate CSV."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, List

import numpy as np

from objshell.geometry import CameraModel, DepthImage, InvariantError, TriangleMesh

DMAP_MAGIC = b"DMAP1"
CAMERA_KEYS = ("fx", "fy", "cx", "cy", "width", "height")
CANDIDATE_HEADER = ["u", "v", "x", "y", "z", "nx", "ny", "nz", "roll", "feasible", "width", "quality"]


class FormatError(ValueError):
    """A file does not follow its declared format."""


def write_dmap(path, depth: DepthImage) -> None:
    data = np.ascontiguousarray(depth.data, dtype="<f4")
    with open(path, "wb") as f:
        f.write(DMAP_MAGIC + b"\n")
        f.write(f"{depth.width} {depth.height}\n".encode("ascii"))
        f.write(data.tobytes())


def read_dmap(path) -> DepthImage:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != DMAP_MAGIC:
            raise FormatError(f"{path}: not a DMAP1 file")
        try:
            w, h = (int(x) for x in f.readline().split())
        except ValueError as exc:
            raise FormatError(f"{path}: bad size line") from exc
        raw = f.read()
    if len(raw) != 4 * w * h:
        raise FormatError(f"{path}: expected {4 * w * h} data bytes, got {len(raw)}")
    return DepthImage(np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(np.float64))


def write_camera(path, cam: CameraModel) -> None:
    lines = [f"{k}={float(getattr(cam, k))!r}" for k in CAMERA_KEYS[:4]]
    lines += [f"{k}={int(getattr(cam, k))}" for k in CAMERA_KEYS[4:]]
    Path(path).write_text("\n".join(lines) + "\n")


def read_camera(path) -> CameraModel:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = val
    missing = [k for k in CAMERA_KEYS if k not in values]
    if missing:
        raise FormatError(f"{path}: missing camera keys {missing}")
    try:
        return CameraModel(
            float(values["fx"]),
            float(values["fy"]),
            float(values["cx"]),
            float(values["cy"]),
            int(values["width"]),
            int(values["height"]),
        )
    except ValueError as exc:
        if isinstance(exc, InvariantError):
            raise
        raise FormatError(f"{path}: non-numeric camera value") from exc


def write_obj(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as f:
        for x, y, z in mesh.vertices:
            f.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in mesh.triangles + 1:
            f.write(f"f {a} {b} {c}\n")


def read_obj(path) -> TriangleMesh:
    """Read v/f records; polygons are fan-triangulated, other records ignored."""
    verts: List[List[float]] = []
    faces: List[List[int]] = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "v":
                    if len(parts) < 4:
                        raise ValueError
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                    idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                    if len(idx) < 3 or min(idx) < 0:
                        raise ValueError
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: malformed record") from exc
    tris = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(tris) and tris.max() >= len(verts):
        raise FormatError(f"{path}: face index beyond the {len(verts)} vertices")
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), tris)


def write_pgm(path, image: np.ndarray, maxval: int) -> None:
    """Binary P5 PGM; 16-bit samples are big-endian per the format."""
    img = np.asarray(image)
    h, w = img.shape
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        f.write(np.ascontiguousarray(img, dtype=dtype).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    n = w * h * np.dtype(dtype).itemsize
    if len(blob) - pos != n:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(blob[pos:], dtype=dtype).reshape(h, w).astype(np.int64)


def depth_to_pgm(path, depth: DepthImage) -> None:
    """Visualization export: integer millimeters clamped to 16 bits."""
    mm = np.clip(np.rint(depth.data * 1000.0), 0, 65535)
    write_pgm(path, mm, 65535)


def write_candidates(path, candidates: Iterable) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CANDIDATE_HEADER)
        for c in candidates:
            x, y, z = c.pose.anchor
            nx, ny, nz = c.pose.finger_axis
            w.writerow(
                [
                    c.pixel[0],
                    c.pixel[1],
                    repr(float(x)),
                    repr(float(y)),
                    repr(float(z)),
                    repr(float(nx)),
                    repr(float(ny)),
                    repr(float(nz)),
                    repr(float(c.pose.roll)),
                    int(c.feasible),
                    repr(float(c.width)),
                    repr(float(c.quality)),
                ]
            )


def read_candidates(path) -> List[dict]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CANDIDATE_HEADER:
            raise FormatError(f"{path}: unexpected candidate header {reader.fieldnames}")
        for row in reader:
            try:
                rows.append(
                    {
                        "u": int(row["u"]),
                        "v": int(row["v"]),
                        "anchor": np.array([float(row[k]) for k in ("x", "y", "z")]),
                        "normal": np.array([float(row[k]) for k in ("nx", "ny", "nz")]),
                        "roll": float(row["roll"]),
                        "feasible": bool(int(row["feasible"])),
                        "width": float(row["width"]),
                        "quality": float(row["quality"]),
                    }
                )
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}: malformed candidate row") from exc
    return rows
