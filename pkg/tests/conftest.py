import numpy as np
import pytest

from dsvdphat.config import RunConfig
from dsvdphat.dsvd import build_index
from dsvdphat.geometry import build_doa_grid, build_steering_matrix, respeaker_geometry


@pytest.fixture(scope="session")
def geom():
    return respeaker_geometry()


@pytest.fixture(scope="session")
def grid(geom):
    return build_doa_grid(4, "icosahedron", geom.normal())


@pytest.fixture(scope="session")
def W(geom, grid):
    return build_steering_matrix(geom, grid, 256)


@pytest.fixture(scope="session")
def index(W):
    return build_index(W, 1e-5)


@pytest.fixture(scope="session")
def small_grid(geom):
    return build_doa_grid(2, "icosahedron", geom.normal())


@pytest.fixture(scope="session")
def small_index(geom, small_grid):
    return build_index(build_steering_matrix(geom, small_grid, 64), 1e-5)


@pytest.fixture(scope="session")
def default_config():
    return RunConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(criterion, ok, detail):
        label = "INFO" if ok is None else "PASS" if ok else "FAIL"
        lines.append(f"criterion {criterion}: {label}  {detail}")

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
