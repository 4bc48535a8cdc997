import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from objshell.geometry import CameraModel, Pose, rotation_about  # noqa: E402
from objshell.primitives import box, cylinder, icosphere  # noqa: E402
from objshell.raycast import extract_shell  # noqa: E402

SPHERE_R = 0.05
CENTER = np.array([0.0, 0.0, 0.75])


@pytest.fixture(scope="session")
def cam():
    return CameraModel.default()


@pytest.fixture(scope="session")
def small_cam():
    return CameraModel.default(160, 120)


@pytest.fixture(scope="session")
def sphere_mesh():
    return icosphere(SPHERE_R, 5, CENTER)


@pytest.fixture(scope="session")
def sphere_shell(sphere_mesh, cam):
    return extract_shell(sphere_mesh, cam)


@pytest.fixture(scope="session")
def box_mesh():
    return box((0.1, 0.1, 0.06), center=CENTER, subdivisions=4)


@pytest.fixture(scope="session")
def box_shell(box_mesh, cam):
    return extract_shell(box_mesh, cam)


def standing_cylinder(radius=0.03, height=0.15, center=CENTER):
    """Upright cylinder (axis along camera y) seen from the side."""
    m = cylinder(radius, height, segments=64, rings=16, cap_rings=4)
    return m.transformed(Pose(rotation_about([1, 0, 0], np.pi / 2), np.asarray(center, float)))


@pytest.fixture(scope="session")
def cylinder_mesh():
    return standing_cylinder()


@pytest.fixture(scope="session")
def cylinder_shell(cylinder_mesh, cam):
    return extract_shell(cylinder_mesh, cam)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        status, title, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}: {title}" + (f" ({detail})" if detail else ""))
