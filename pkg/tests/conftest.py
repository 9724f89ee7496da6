import math

import numpy as np
import pytest

from membrane.mesh import build_ellipse_mesh, build_rectangle_mesh, refine_times
from membrane.optimizer import InitShape, multi_start


@pytest.fixture(scope="session")
def square16():
    return build_rectangle_mesh(1.0, 1.0, 16)


@pytest.fixture(scope="session")
def disk64():
    return build_ellipse_mesh(1.0, 1.0, 64)


@pytest.fixture(scope="session")
def disk_fine():
    return refine_times(build_ellipse_mesh(1.0, 1.0, 64), 1)


@pytest.fixture(scope="session")
def disk_shell(disk_fine):
    """Multi-start on the unit disk at alpha=10, A=pi/2."""
    inits = [InitShape("boundary_ring"), InitShape("half_plane", angle=0.0),
             InitShape("sector", angle=math.pi / 2), InitShape("random", seed=3)]
    return multi_start(disk_fine, 10.0, math.pi / 2, inits, eps=1e-9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
