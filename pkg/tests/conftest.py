import numpy as np
import pytest

from fermicrit.grid import make_grid
from fermicrit.potential import build_coulomb


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(16, 12.0)


@pytest.fixture(scope="session")
def grid24():
    return make_grid(24, 16.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def hydrogen24(grid24):
    return build_coulomb(grid24, [(0.0, 0.0, 0.0)])


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: slow acceptance criteria")


def pytest_terminal_summary(terminalreporter, config):
    from pathlib import Path

    import test_acceptance

    lines = sorted(config.stash.get(test_acceptance.RESULTS_KEY, []))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in lines:
        terminalreporter.write_line(line)
    Path(config.rootpath, "acceptance_results.txt").write_text(
        "\n".join(line for _, line in lines) + "\n")
