import math

import pytest

from emhvortex.fields import VortexConfig
from emhvortex.grid import build_grid


@pytest.fixture(scope="session")
def grid64():
    return build_grid(64, 64, 16 * math.pi)


@pytest.fixture(scope="session")
def reference_config():
    return VortexConfig(N=2, ell=1, tau=1.0, V=16 * math.pi)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
