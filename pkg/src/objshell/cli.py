"""Command-line entry point.

Results go to stdout as tab-separated ``key<TAB>value`` lines (or the bare
values documented per command); diagnostics go to stderr. Exit codes:
0 success, 1 usage error, 2 I/O or format error, 3 invalid input data.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from objshell import __version__, io
from objshell.datagen import AugmentParams, DatasetConfig, gen_dataset, postrender_augment
from objshell.geometry import CameraModel, DepthImage, InvariantError, ObjectShell
from objshell.grasp import GraspCandidate, GraspMaps, GraspPose, GripperModel, compute_grasp_maps
from objshell.metrics import GT_DENSITY, format_table, grasp_precision, map_metrics, mesh_chamfer
from objshell.raycast import extract_shell, render_depth
from objshell.rng import RngStream
from objshell.shellmesh import DEFAULT_DISCONTINUITY, DegenerateVolumeError, mesh_volume_centroid, stitch_shell

log = logging.getLogger("objshell")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVALID = 0, 1, 2, 3
MAP_FILES = ("feas.pgm", "qual.pgm", "width.dmap", "candidates.csv", "mask.pgm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(pairs) -> None:
    for k, v in pairs:
        print(f"{k}\t{v}")


def _need(*paths) -> None:
    """Fail fast (exit 2) before any work if an input file is missing."""
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")


def _out_file(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _prefixed(prefix: str, name: str) -> Path:
    return _out_file(prefix + name)


def _camera(args, width=None, height=None) -> CameraModel:
    if getattr(args, "camera", None):
        return io.read_camera(args.camera)
    if width is not None:
        return CameraModel.default(width, height)
    return CameraModel.default()


def _gripper(args) -> GripperModel:
    return GripperModel(
        max_opening=args.opening,
        finger_pad_width=args.pad_width,
        finger_pad_height=args.pad_height,
        finger_body_thickness=args.body_thickness,
        min_contact_points=args.min_contacts,
    )


def _augment(args) -> AugmentParams:
    return AugmentParams(
        mult_sigma=args.mult_sigma,
        add_sigma=args.add_sigma,
        theta_deg=(args.theta_min, args.theta_max),
        pepper_max=args.pepper_max,
        erosion_rounds=(args.erosion_min, args.erosion_max),
        erosion_prob=args.erosion_prob,
        coarse_rounds=args.coarse_rounds,
        exempt_max=args.exempt_max,
    )


def _read_shell(args) -> ObjectShell:
    _need(args.entry, args.exit, args.camera)
    cam = io.read_camera(args.camera)
    return ObjectShell(io.read_dmap(args.entry), io.read_dmap(args.exit), cam)


def _write_maps(prefix: str, maps: GraspMaps) -> None:
    io.write_pgm(_prefixed(prefix, "feas.pgm"), maps.feasibility * 255, 255)
    io.write_pgm(_prefixed(prefix, "qual.pgm"), np.rint(maps.quality * 65535), 65535)
    io.write_dmap(_prefixed(prefix, "width.dmap"), DepthImage(maps.width))
    io.write_candidates(_prefixed(prefix, "candidates.csv"), maps.candidates)
    io.write_pgm(_prefixed(prefix, "mask.pgm"), maps.mask.astype(np.uint8) * 255, 255)


def _mesh_summary(mesh):
    try:
        volume, centroid = mesh_volume_centroid(mesh)
    except DegenerateVolumeError:
        volume, centroid = float("nan"), np.full(3, np.nan)
    return [
        ("vertices", len(mesh.vertices)),
        ("triangles", len(mesh.triangles)),
        ("closed", int(mesh.is_closed())),
        ("volume", repr(volume)),
        ("centroid", " ".join(repr(float(c)) for c in centroid)),
    ]


def _maps_summary(maps: GraspMaps):
    return [
        ("anchors", len(maps.anchor_pixels)),
        ("feasible_anchors", int(maps.roll_feasible.any(axis=1).sum())),
        ("feasible_pixels", int(maps.feasibility.sum())),
        ("mask_pixels", int(maps.mask.sum())),
    ]


# -- commands ---------------------------------------------------------------


def cmd_gen_data(args) -> int:
    config = DatasetConfig(
        camera=CameraModel.default(args.width, args.height, args.focal),
        gripper=_gripper(args),
        stride=args.stride,
        augment=_augment(args),
    )
    done = gen_dataset(args.shapes, args.views, args.out, args.seed, jobs=args.jobs, config=config)
    _emit([("samples", len(done)), ("manifest", Path(args.out) / "manifest.txt")])
    return EXIT_OK


def cmd_augment_depth(args) -> int:
    _need(args.input, args.camera)
    depth = io.read_dmap(args.input)
    cam = _camera(args, depth.width, depth.height)
    out = postrender_augment(depth, RngStream(args.seed), cam, _augment(args))
    io.write_dmap(_out_file(args.out), out)
    _emit([("valid_in", depth.valid_count()), ("valid_out", out.valid_count())])
    return EXIT_OK


def cmd_render(args) -> int:
    _need(args.mesh, args.camera)
    mesh = io.read_obj(args.mesh)
    cam = _camera(args)
    depth = render_depth(mesh, cam)
    io.write_dmap(_out_file(args.out), depth)
    if args.pgm:
        io.depth_to_pgm(_out_file(args.pgm), depth)
    _emit([("valid_pixels", depth.valid_count())])
    return EXIT_OK


def cmd_extract_shell(args) -> int:
    _need(args.mesh, args.camera)
    mesh = io.read_obj(args.mesh)
    cam = _camera(args)
    shell = extract_shell(mesh, cam)
    io.write_dmap(_out_file(args.out_entry), shell.entry)
    io.write_dmap(_out_file(args.out_exit), shell.exit)
    _emit([("valid_pixels", shell.entry.valid_count())])
    return EXIT_OK


def cmd_stitch(args) -> int:
    shell = _read_shell(args)
    mesh = stitch_shell(shell, args.discontinuity)
    io.write_obj(_out_file(args.out), mesh)
    _emit(_mesh_summary(mesh))
    return EXIT_OK


def cmd_grasp_maps(args) -> int:
    shell = _read_shell(args)
    maps = compute_grasp_maps(shell, _gripper(args), args.stride, args.discontinuity)
    _write_maps(args.out_prefix, maps)
    _emit(_maps_summary(maps))
    return EXIT_OK


def cmd_eval_chamfer(args) -> int:
    _need(args.mesh_a, args.mesh_b)
    mesh_a, mesh_b = io.read_obj(args.mesh_a), io.read_obj(args.mesh_b)
    res = mesh_chamfer(mesh_a, mesh_b, args.samples, args.seed, squared=args.variant == "squared")
    print(" ".join(format_table(x, args.digits) for x in (res.forward, res.backward, res.sum)))
    return EXIT_OK


def cmd_eval_grasps(args) -> int:
    _need(args.candidates, args.gt)
    rows = io.read_candidates(args.candidates)
    gt = io.read_obj(args.gt)
    cands = [
        GraspCandidate(
            GraspPose(r["anchor"], r["normal"] / np.linalg.norm(r["normal"]), r["roll"]),
            (r["u"], r["v"]),
            r["feasible"],
            r["width"],
            r["quality"],
            0,
        )
        for r in rows
    ]
    rate = grasp_precision(cands, gt, args.clearance, _gripper(args), RngStream(args.seed), args.density)
    print("n/a" if rate is None else f"{rate:.6f}")
    return EXIT_OK


def _read_map_prefix(prefix: str) -> GraspMaps:
    _need(prefix + "feas.pgm", prefix + "qual.pgm")
    feas = (io.read_pgm(prefix + "feas.pgm") > 0).astype(np.uint8)
    qual = io.read_pgm(prefix + "qual.pgm") / 65535.0
    if feas.shape != qual.shape:
        raise InvariantError(f"{prefix}: feasibility and quality sizes differ")
    if Path(prefix + "mask.pgm").is_file():
        mask = io.read_pgm(prefix + "mask.pgm") > 0
    elif Path(prefix + "entry.dmap").is_file():
        mask = io.read_dmap(prefix + "entry.dmap").mask
    else:
        mask = np.ones(feas.shape, dtype=bool)
    if mask.shape != feas.shape:
        raise InvariantError(f"{prefix}: mask size differs from the maps")
    return GraspMaps(feas, qual, np.zeros(feas.shape), mask)


def cmd_eval_maps(args) -> int:
    m = map_metrics(_read_map_prefix(args.pred_prefix), _read_map_prefix(args.gt_prefix))
    print(f"{m.accuracy:.6f} {m.f1:.6f} {m.quality_rmse:.6f} {m.quality_rmse_high:.6f}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    _need(args.mesh, args.camera)
    mesh = io.read_obj(args.mesh)
    cam = _camera(args)
    out = str(args.out_dir).rstrip("/") + "/"
    shell = extract_shell(mesh, cam)
    io.write_dmap(_prefixed(out, "entry.dmap"), shell.entry)
    io.write_dmap(_prefixed(out, "exit.dmap"), shell.exit)
    io.write_camera(_prefixed(out, "cam.txt"), cam)
    recon = stitch_shell(shell, args.discontinuity)
    io.write_obj(_prefixed(out, "mesh.obj"), recon)
    maps = compute_grasp_maps(shell, _gripper(args), args.stride, args.discontinuity)
    _write_maps(out, maps)
    if args.figure:
        from objshell.plotting import save_shell_figure

        save_shell_figure(_out_file(args.figure), shell, maps, title=Path(args.mesh).stem)
    _emit([("valid_pixels", shell.entry.valid_count())] + _mesh_summary(recon) + _maps_summary(maps))
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _add_gripper_flags(p) -> None:
    g = GripperModel()
    p.add_argument("--opening", type=float, default=g.max_opening, help="max jaw opening [m]")
    p.add_argument("--pad-width", type=float, default=g.finger_pad_width)
    p.add_argument("--pad-height", type=float, default=g.finger_pad_height)
    p.add_argument("--body-thickness", type=float, default=g.finger_body_thickness)
    p.add_argument("--min-contacts", type=int, default=g.min_contact_points)


def _add_map_flags(p) -> None:
    p.add_argument("--stride", type=int, default=4, help="anchor grid spacing in pixels")
    p.add_argument("--discontinuity", type=float, default=DEFAULT_DISCONTINUITY)
    _add_gripper_flags(p)


def _add_augment_flags(p) -> None:
    a = AugmentParams()
    p.add_argument("--mult-sigma", type=float, default=a.mult_sigma)
    p.add_argument("--add-sigma", type=float, default=a.add_sigma)
    p.add_argument("--theta-min", type=float, default=a.theta_deg[0], help="degrees")
    p.add_argument("--theta-max", type=float, default=a.theta_deg[1], help="degrees")
    p.add_argument("--pepper-max", type=int, default=a.pepper_max)
    p.add_argument("--erosion-min", type=int, default=a.erosion_rounds[0])
    p.add_argument("--erosion-max", type=int, default=a.erosion_rounds[1])
    p.add_argument("--erosion-prob", type=float, default=a.erosion_prob)
    p.add_argument("--coarse-rounds", type=int, default=a.coarse_rounds)
    p.add_argument("--exempt-max", type=int, default=a.exempt_max)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="objshell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"objshell {__version__}")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")
    parser.add_argument("-v", "--verbose", action="store_true")
    # subcommands also accept --jobs; SUPPRESS keeps the global value otherwise
    common = _Parser(add_help=False)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, parents=[common])
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "generate a synthetic dataset")
    p.add_argument("--shapes", type=int, required=True)
    p.add_argument("--views", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=DatasetConfig().camera.width)
    p.add_argument("--height", type=int, default=DatasetConfig().camera.height)
    p.add_argument("--focal", type=float, default=600.0, help="focal length at 640 px width")
    _add_map_flags(p)
    _add_augment_flags(p)

    p = add("augment-depth", cmd_augment_depth, "post-render depth augmentation")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--camera")
    _add_augment_flags(p)

    p = add("render", cmd_render, "render a depth image of a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--camera")
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", help="also write a millimeter PGM")

    p = add("extract-shell", cmd_extract_shell, "entry/exit shell of a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--camera")
    p.add_argument("--out-entry", required=True)
    p.add_argument("--out-exit", required=True)

    p = add("stitch", cmd_stitch, "closed mesh from a shell")
    p.add_argument("--entry", required=True)
    p.add_argument("--exit", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--discontinuity", type=float, default=DEFAULT_DISCONTINUITY)

    p = add("grasp-maps", cmd_grasp_maps, "grasp feasibility/quality/width maps")
    p.add_argument("--entry", required=True)
    p.add_argument("--exit", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--out-prefix", required=True)
    _add_map_flags(p)

    p = add("eval-chamfer", cmd_eval_chamfer, "Chamfer distance between two meshes")
    p.add_argument("--mesh-a", required=True)
    p.add_argument("--mesh-b", required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--digits", type=int, default=1)
    p.add_argument("--variant", choices=("mean", "squared"), default="mean",
                   help="mean Euclidean or mean squared nearest-neighbor distance")

    p = add("eval-grasps", cmd_eval_grasps, "geometric grasp precision against a GT mesh")
    p.add_argument("--candidates", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--clearance", type=float, default=0.015)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", type=float, default=GT_DENSITY, help="GT samples per m^2")
    _add_gripper_flags(p)

    p = add("eval-maps", cmd_eval_maps, "feasibility accuracy/F1 and quality RMSE")
    p.add_argument("--pred-prefix", required=True)
    p.add_argument("--gt-prefix", required=True)

    p = add("pipeline", cmd_pipeline, "extract-shell, stitch and grasp-maps for one mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--camera")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--figure", help="write a PNG panel of the shell and maps")
    _add_map_flags(p)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, io.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
