import sys

import numpy as np
import pytest

from carterkit import catalog

SYSTEMS = ("example1", "example2", "example3", "evans")


@pytest.fixture(scope="session")
def systems():
    return {name: catalog.load(name) for name in catalog.ENTRIES}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def central_difference(f, z, i, h=1e-6):
    zp, zm = list(z), list(z)
    zp[i] += h
    zm[i] -= h
    return (f(zp) - f(zm)) / (2 * h)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None:
        return
    lines = module.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
