import copy

import pytest

from mixflow.networks import grid2x2, road, single_intersection
from mixflow.scenario import load_scenario


@pytest.fixture
def road_doc():
    return road()


@pytest.fixture
def single_doc():
    return copy.deepcopy(single_intersection())


@pytest.fixture
def grid_doc():
    return copy.deepcopy(grid2x2())


@pytest.fixture
def single():
    return load_scenario(single_intersection())


@pytest.fixture
def grid():
    return load_scenario(grid2x2())


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(LINES):
            terminalreporter.write_line(line)
