import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objshell import io
from objshell.geometry import (
    CameraModel,
    DepthImage,
    InvariantError,
    ObjectShell,
    PointCloud,
    Pose,
    TriangleMesh,
    backproject,
    project,
    quaternion_to_matrix,
    rotation_about,
)
from objshell.grasp import GraspPose, GraspCandidate
from objshell.primitives import box, cup, cylinder, icosphere, plane_grid

coord = st.floats(-2.0, 2.0, allow_nan=False)
depth = st.floats(0.05, 5.0, allow_nan=False)


def test_project_examples(cam):
    assert project((0, 0, 0.75), cam) == (320.0, 240.0, 0.75)
    assert project((0.1, 0, 1.0), cam) == pytest.approx((380.0, 240.0, 1.0), abs=1e-12)
    np.testing.assert_allclose(backproject(320, 240, 0.75, cam), [0, 0, 0.75], atol=1e-15)
    np.testing.assert_allclose(backproject(380, 240, 1.0, cam), [0.1, 0, 1.0], atol=1e-15)


def test_project_errors(cam):
    with pytest.raises(ValueError, match="behind camera"):
        project((0, 0, 0.0), cam)
    with pytest.raises(ValueError, match="invalid depth"):
        backproject(1, 2, -1.0, cam)


@settings(max_examples=200, deadline=None)
@given(coord, coord, depth)
def test_project_backproject_roundtrip(x, y, z):
    cam = CameraModel.default()
    u, v, zz = project((x, y, z), cam)
    np.testing.assert_allclose(backproject(u, v, zz, cam), [x, y, z], atol=1e-9)


def test_roundtrip_vectorized(cam):
    rng = np.random.default_rng(0)
    p = np.column_stack([rng.uniform(-1, 1, 1000), rng.uniform(-1, 1, 1000), rng.uniform(0.1, 3, 1000)])
    u, v, z = project(p, cam)
    assert np.max(np.abs(backproject(u, v, z, cam) - p)) < 1e-9


def test_backprojected_plane(cam):
    d = np.full(cam.shape, 0.5)
    pts = cam.backproject_image(d)
    assert np.max(np.abs(pts[..., 2] - 0.5)) < 1e-9


def test_camera_invariants():
    with pytest.raises(InvariantError):
        CameraModel(0, 1, 0, 0, 10, 10)
    with pytest.raises(InvariantError):
        CameraModel(1, 1, 10, 0, 10, 10)
    cam = CameraModel.default(320, 240)
    assert cam.fx == 300 and (cam.cx, cam.cy) == (160, 120)


def test_pixel_directions_unit(small_cam):
    d = small_cam.pixel_directions()
    np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(d[60, 80], [0, 0, 1], atol=1e-15)


def test_depth_image_sentinels():
    d = DepthImage(np.array([[np.nan, -1.0], [0.0, 2.0]]))
    assert d.mask.tolist() == [[False, False], [False, True]]
    assert d.valid_count() == 1
    with pytest.raises(InvariantError):
        DepthImage(np.array([[np.inf]]))
    with pytest.raises(ValueError):
        d.data[0, 0] = 1.0  # read-only


def test_object_shell_invariants(small_cam):
    e = np.zeros(small_cam.shape)
    x = np.zeros(small_cam.shape)
    e[5, 5], x[5, 5] = 1.0, 1.2
    ObjectShell(DepthImage(e), DepthImage(x), small_cam)
    with pytest.raises(InvariantError):
        ObjectShell(DepthImage(x), DepthImage(e), small_cam)
    x2 = x.copy()
    x2[6, 6] = 1.0
    with pytest.raises(InvariantError):
        ObjectShell(DepthImage(e), DepthImage(x2), small_cam)


def test_mesh_drops_degenerate_and_checks_indices():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], float)
    m = TriangleMesh(v, [[0, 1, 2], [0, 1, 3]])
    assert len(m) == 1
    with pytest.raises(InvariantError):
        TriangleMesh(v, [[0, 1, 7]])


def test_point_cloud_normals():
    with pytest.raises(InvariantError):
        PointCloud(np.zeros((2, 3)), np.ones((2, 3)))
    assert len(PointCloud(np.zeros((2, 3)), np.tile([0, 0, 1.0], (2, 1)))) == 2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4).filter(lambda q: np.linalg.norm(q) > 1e-3))
def test_quaternion_rotation_is_proper(q):
    r = quaternion_to_matrix(q)
    pose = Pose(r, np.zeros(3))  # validates orthonormality and det
    np.testing.assert_allclose(pose.compose(pose.inverse()).rotation, np.eye(3), atol=1e-12)


def test_pose_rejects_reflection():
    with pytest.raises(InvariantError):
        Pose(np.diag([1.0, 1.0, -1.0]))


def test_pose_apply_inverse():
    p = Pose(rotation_about([1, 2, 3], 0.7), np.array([0.1, -0.2, 0.3]))
    x = np.random.default_rng(1).normal(size=(10, 3))
    np.testing.assert_allclose(p.inverse().apply(p.apply(x)), x, atol=1e-12)


@pytest.mark.parametrize(
    "mesh, volume",
    [
        (icosphere(1.0, 4), None),
        (box((0.3, 0.2, 0.1), subdivisions=3), 0.3 * 0.2 * 0.1),
        (cylinder(0.5, 2.0, segments=64, rings=3, cap_rings=2), 64 / 2 * 0.25 * np.sin(2 * np.pi / 64) * 2.0),
        (cup(), None),
    ],
)
def test_primitives_closed(mesh, volume):
    from objshell.shellmesh import mesh_volume_centroid

    assert mesh.is_closed()
    vol, _ = mesh_volume_centroid(mesh)
    assert vol > 0
    if volume is not None:
        assert vol == pytest.approx(volume, rel=1e-9)


def test_plane_grid_faces_camera():
    m = plane_grid(1.0, 4, z=0.5)
    n = np.cross(m.vertices[m.triangles[:, 1]] - m.vertices[m.triangles[:, 0]], m.vertices[m.triangles[:, 2]] - m.vertices[m.triangles[:, 0]])
    assert np.all(n[:, 2] < 0)


# -- file formats -------------------------------------------------------------


def test_dmap_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(2)
    raw = rng.uniform(0.3, 2.0, (7, 11)).astype(np.float32)
    raw[rng.random((7, 11)) < 0.3] = 0
    d = DepthImage(raw)
    io.write_dmap(tmp_path / "a.dmap", d)
    back = io.read_dmap(tmp_path / "a.dmap")
    assert np.array_equal(back.data, d.data)
    io.write_dmap(tmp_path / "b.dmap", back)
    assert (tmp_path / "a.dmap").read_bytes() == (tmp_path / "b.dmap").read_bytes()
    blob = (tmp_path / "a.dmap").read_bytes()
    assert blob.startswith(b"DMAP1\n11 7\n") and len(blob) == len(b"DMAP1\n11 7\n") + 4 * 77


def test_dmap_rejects_truncated(tmp_path):
    p = tmp_path / "bad.dmap"
    p.write_bytes(b"DMAP1\n4 4\n" + b"\0" * 10)
    with pytest.raises(io.FormatError):
        io.read_dmap(p)
    p.write_bytes(b"NOPE\n")
    with pytest.raises(io.FormatError):
        io.read_dmap(p)


def test_camera_roundtrip(tmp_path):
    cam = CameraModel(612.5, 611.0, 319.5, 241.25, 640, 480)
    io.write_camera(tmp_path / "cam.txt", cam)
    assert io.read_camera(tmp_path / "cam.txt") == cam
    (tmp_path / "bad.txt").write_text("fx=1\n")
    with pytest.raises(io.FormatError):
        io.read_camera(tmp_path / "bad.txt")


def test_obj_roundtrip(tmp_path):
    m = icosphere(0.1, 2, (0.0, 0.1, 0.7))
    io.write_obj(tmp_path / "m.obj", m)
    back = io.read_obj(tmp_path / "m.obj")
    assert np.array_equal(back.vertices, m.vertices) and np.array_equal(back.triangles, m.triangles)


def test_obj_quads_fan(tmp_path):
    (tmp_path / "q.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n")
    assert io.read_obj(tmp_path / "q.obj").triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_pgm_roundtrip(tmp_path):
    img = np.arange(12).reshape(3, 4) * 5000
    io.write_pgm(tmp_path / "a.pgm", img, 65535)
    assert np.array_equal(io.read_pgm(tmp_path / "a.pgm"), img)
    blob = (tmp_path / "a.pgm").read_bytes()
    assert blob.startswith(b"P5\n4 3\n65535\n")
    assert blob[-2:] == int(55000).to_bytes(2, "big")
    io.write_pgm(tmp_path / "b.pgm", np.array([[0, 255]]), 255)
    assert io.read_pgm(tmp_path / "b.pgm").tolist() == [[0, 255]]


def test_depth_to_pgm_millimeters(tmp_path):
    io.depth_to_pgm(tmp_path / "d.pgm", DepthImage(np.array([[0.7504, 0.0, 70.0]])))
    assert io.read_pgm(tmp_path / "d.pgm").tolist() == [[750, 0, 65535]]


def test_candidates_roundtrip(tmp_path):
    pose = GraspPose(np.array([0.01, -0.02, 0.7]), np.array([0.0, 0.0, -1.0]), np.pi / 4)
    cands = [GraspCandidate(pose, (3, 4), True, 0.05, 0.25, 30), GraspCandidate(pose, (5, 6), False, 0.0, 0.0, 2)]
    io.write_candidates(tmp_path / "c.csv", cands)
    text = (tmp_path / "c.csv").read_text().splitlines()
    assert text[0] == "u,v,x,y,z,nx,ny,nz,roll,feasible,width,quality"
    rows = io.read_candidates(tmp_path / "c.csv")
    assert rows[0]["feasible"] and not rows[1]["feasible"]
    assert rows[0]["width"] == 0.05 and rows[0]["roll"] == np.pi / 4
    np.testing.assert_array_equal(rows[0]["anchor"], pose.anchor)
