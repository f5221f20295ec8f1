import numpy as np
import pytest
from hypothesis import settings

from symflow.algebra import catalog_lookup, structure_constants
from symflow.bcdsl import BCSpec, InitialProfiles

settings.register_profile("symflow", max_examples=40, deadline=None)
settings.load_profile("symflow")

PERTURBED_F = "1+0.05*cos(pi*r)"


@pytest.fixture(scope="session")
def sphere2():
    return structure_constants(catalog_lookup("sphere(2)"))


@pytest.fixture(scope="session")
def sphere3():
    return structure_constants(catalog_lookup("sphere(3)"))


@pytest.fixture(scope="session")
def su3():
    return structure_constants(catalog_lookup("su3/t2"))


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


@pytest.fixture(scope="session")
def geodesic1():
    return BCSpec.totally_geodesic(1)


@pytest.fixture(scope="session")
def flat_init():
    return InitialProfiles("1", ("1",))


@pytest.fixture(scope="session")
def perturbed_init():
    return InitialProfiles("1", (PERTURBED_F,))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
