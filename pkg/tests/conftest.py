import math
import sys

import pytest

from ppinfo.measure import ReferenceMeasure
from ppinfo.models import desk_lattice, desk_models
from ppinfo.space import QuadratureGrid

E5 = math.exp(-5.0)


@pytest.fixture(scope="session")
def lattice():
    return desk_lattice()


@pytest.fixture(scope="session")
def models(lattice):
    return desk_models(lattice)


@pytest.fixture(scope="session")
def grid():
    return QuadratureGrid(cells=100)


@pytest.fixture(scope="session")
def poisson(models):
    return models["poisson"]


@pytest.fixture(scope="session")
def mb(models):
    return models["multi_bernoulli"]


@pytest.fixture
def ref2():
    return ReferenceMeasure.of(2.0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS, key=lambda l: int(l.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
