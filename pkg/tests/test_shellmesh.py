import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objshell.geometry import CameraModel, DepthImage, ObjectShell, TriangleMesh
from objshell.metrics import mesh_chamfer
from objshell.primitives import box
from objshell.shellmesh import (
    DegenerateVolumeError,
    mesh_volume_centroid,
    shell_to_pointcloud,
    stitch_shell,
    trace_boundary,
    triangulate_layer,
)

CAM = CameraModel.default(160, 120)


def flat_shell(mask, front=0.7, back=0.75, cam=CAM):
    e = np.where(mask, front, 0.0)
    x = np.where(mask, back, 0.0)
    return ObjectShell(DepthImage(e), DepthImage(x), cam)


def ellipse_mask(a, b, angle, cx=80.0, cy=60.0, shape=(120, 160)):
    v, u = np.mgrid[0 : shape[0], 0 : shape[1]].astype(float)
    c, s = np.cos(angle), np.sin(angle)
    du, dv = u - cx, v - cy
    return ((c * du + s * dv) / a) ** 2 + ((-s * du + c * dv) / b) ** 2 <= 1.0


def directed_edges_unique(mesh):
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    return len(np.unique(e, axis=0)) == len(e)


# -- point cloud ---------------------------------------------------------------


def test_pointcloud_counts():
    m = np.zeros(CAM.shape, bool)
    m[10:20, 30:40] = True
    assert len(shell_to_pointcloud(flat_shell(m))) == 200
    assert len(shell_to_pointcloud(flat_shell(np.zeros(CAM.shape, bool)))) == 0


def test_sphere_points_on_surface(sphere_shell):
    pts = shell_to_pointcloud(sphere_shell).points
    assert len(pts) == 2 * sphere_shell.mask.sum()
    r = np.linalg.norm(pts - [0, 0, 0.75], axis=1)
    assert np.max(np.abs(r - 0.05)) < 1e-4


# -- layer triangulation -------------------------------------------------------


@pytest.mark.parametrize("w,h", [(2, 2), (5, 3), (17, 11)])
def test_full_layer_count(w, h):
    cam = CameraModel.default(w, h, 600.0 * 640 / w)
    rng = np.random.default_rng(0)
    d = 0.7 + 1e-4 * rng.random((h, w))
    assert len(triangulate_layer(DepthImage(d), cam)) == 2 * (w - 1) * (h - 1)


def test_step_edge_not_bridged():
    d = np.full(CAM.shape, 0.7)
    d[:, 80:] = 0.8
    mesh = triangulate_layer(DepthImage(d), CAM, depth_discontinuity=0.02)
    z = mesh.vertices[mesh.triangles][:, :, 2]
    assert np.all(z.max(axis=1) - z.min(axis=1) < 0.02)
    assert len(mesh) == 2 * 119 * (79 + 79)


def test_winding_faces():
    d = np.full(CAM.shape, 0.7)
    for facing, sign in ((True, -1), (False, 1)):
        mesh = triangulate_layer(DepthImage(d), CAM, facing_camera=facing)
        v = mesh.vertices[mesh.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        assert np.all(np.sign(n[:, 2]) == sign)


def test_three_pixel_block_single_triangle():
    d = np.zeros((2, 2))
    d[0, 0] = d[0, 1] = d[1, 1] = 0.7
    cam = CameraModel.default(2, 2)
    assert len(triangulate_layer(DepthImage(d), cam)) == 1


# -- contours ------------------------------------------------------------------


def test_square_contour():
    m = np.zeros((7, 7), bool)
    m[2:5, 2:5] = True
    (c,) = trace_boundary(m)
    assert len(c) == 8
    assert set(map(tuple, c.uv)) == {(u, v) for u in range(2, 5) for v in range(2, 5)} - {(3, 3)}
    assert tuple(c.uv[0]) == (2, 2)
    assert c.signed_area() > 0


def test_two_components():
    m = np.zeros((10, 20), bool)
    m[2:5, 2:5] = True
    m[5:8, 12:16] = True
    cs = trace_boundary(m)
    assert len(cs) == 2 and tuple(cs[0].uv[0]) == (2, 2) and tuple(cs[1].uv[0]) == (12, 5)


def test_disc_circumference():
    m = ellipse_mask(50, 50, 0.0, 100, 100, (201, 201))
    (c,) = trace_boundary(m)
    steps = np.linalg.norm(np.diff(np.vstack([c.uv, c.uv[:1]]), axis=0), axis=1)
    assert np.all((steps == 1) | (np.abs(steps - np.sqrt(2)) < 1e-12))
    assert abs(len(c) - 2 * np.pi * 50 / steps.mean()) <= 0.1 * len(c)


def test_single_pixel_and_hole():
    m = np.zeros((9, 9), bool)
    m[0, 0] = True
    m[3:8, 3:8] = True
    m[5, 5] = False
    cs = trace_boundary(m, include_holes=True)
    assert [len(c) for c in cs] == [1, 16, 4]  # N, E, S, W of the hole
    assert cs[2].is_hole and cs[2].signed_area() < 0 < cs[1].signed_area()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_contour_is_closed_8_path(seed):
    rng = np.random.default_rng(seed)
    m = rng.random((24, 24)) < 0.55
    for c in trace_boundary(m, include_holes=True):
        uv = c.uv
        step = np.abs(np.diff(np.vstack([uv, uv[:1]]), axis=0))
        assert np.all(step.max(axis=1) <= 1)
        assert np.all(m[uv[:, 1], uv[:, 0]])


# -- stitching -----------------------------------------------------------------


def test_box_stitch(box_shell):
    mesh = stitch_shell(box_shell)
    assert mesh.is_closed()
    vol, cen = mesh_volume_centroid(mesh)
    assert vol == pytest.approx(6.0e-4, rel=0.02)
    assert np.linalg.norm(cen - [0, 0, 0.75]) < 5e-3


def test_sphere_stitch_chamfer(sphere_shell, sphere_mesh):
    mesh = stitch_shell(sphere_shell)
    assert mesh.is_closed()
    # independent samples of the same surface sit ~0.5/sqrt(density) apart,
    # so 10k samples alone would cost ~0.9 mm per direction
    assert mesh_chamfer(mesh, sphere_mesh, 100_000, seed=1).sum < 1e-3


def test_stitched_vertices_are_shell_pixels(box_shell):
    mesh = stitch_shell(box_shell)
    pts = shell_to_pointcloud(box_shell).points
    assert np.array_equal(mesh.vertices, pts)


def test_annulus_closed_oriented():
    m = ellipse_mask(30, 30, 0.0) & ~ellipse_mask(12, 12, 0.0)
    mesh = stitch_shell(flat_shell(m))
    assert mesh.is_closed() and directed_edges_unique(mesh)
    vol, _ = mesh_volume_centroid(mesh)
    assert vol > 0


@settings(max_examples=40, deadline=None)
@given(
    st.floats(4, 60),
    st.floats(4, 45),
    st.floats(0, np.pi),
    st.floats(0.3, 1.5),
    st.floats(0.001, 0.2),
)
def test_stitch_properties_on_ellipses(a, b, angle, front, thickness):
    mask = ellipse_mask(a, b, angle)
    shell = flat_shell(mask, front, front + thickness)
    mesh = stitch_shell(shell)
    assert mesh.is_closed() and directed_edges_unique(mesh)
    n = int(mask.sum())
    boundary = sum(len(c) for c in trace_boundary(mask, include_holes=True))
    assert len(mesh) <= 2 * (2 * n) + 2 * boundary
    vol, cen = mesh_volume_centroid(mesh)
    assert vol > 0
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    assert np.all(cen >= lo - 1e-12) and np.all(cen <= hi + 1e-12)


def test_zero_thickness_walls_dropped():
    m = ellipse_mask(10, 10, 0.0)
    mesh = stitch_shell(flat_shell(m, 0.7, 0.7))
    assert np.all(mesh.areas() > 1e-14)


def test_empty_shell_rejected():
    with pytest.raises(ValueError):
        stitch_shell(flat_shell(np.zeros(CAM.shape, bool)))


# -- volume --------------------------------------------------------------------


def test_unit_cube_volume():
    vol, cen = mesh_volume_centroid(box((1, 1, 1)))
    assert vol == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(cen, 0, atol=1e-12)
    vol, cen = mesh_volume_centroid(box((1, 1, 1), center=(0, 0, 0.75)))
    np.testing.assert_allclose(cen, [0, 0, 0.75], atol=1e-12)


def test_degenerate_volume():
    m = TriangleMesh(np.array([[0, 0, 1], [1, 0, 1], [0, 1, 1.0]]), [[0, 1, 2], [0, 2, 1]])
    with pytest.raises(DegenerateVolumeError):
        mesh_volume_centroid(m)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-0.03, 0.03))
def test_stitch_watertight_on_blobs(seed, level):
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    mask = ndimage.gaussian_filter(rng.random(CAM.shape), 3) > 0.5 + level
    if not mask.any():
        return
    mesh = stitch_shell(flat_shell(mask))
    # one-pixel necks pinch the solid to a line, so edges may be shared by
    # 4 triangles; every edge is still used equally often in each direction
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    fwd, nf = np.unique(e, axis=0, return_counts=True)
    bwd, nb = np.unique(e[:, ::-1], axis=0, return_counts=True)
    assert np.array_equal(fwd, bwd) and np.array_equal(nf, nb)
    assert mesh_volume_centroid(mesh)[0] > 0
