import numpy as np
import pytest

from hamflow.spectral import Boundary, DomainSpec, SpectralField, enumerate_modes
from hamflow.index import MatrixField
from hamflow.hamiltonians import PinchedModel, SaturatingModel

FORCING = [(0, "const", 1, 0, 0.3), (1, "cos", 1, 1, 0.2), (0, "const", 2, 1, 0.1)]


@pytest.fixture(scope="session")
def small():
    """k <= 4, n <= 3 on (0, pi): 54 coefficients."""
    return enumerate_modes(DomainSpec(), 4, 9)


@pytest.fixture(scope="session")
def medium():
    return enumerate_modes(DomainSpec(), 8, 64)


@pytest.fixture(scope="session")
def neumann():
    return enumerate_modes(DomainSpec(boundary=Boundary.NEUMANN), 3, 9)


@pytest.fixture(scope="session")
def box2d():
    return enumerate_modes(DomainSpec(lengths=(np.pi, 2.0), m=2), 2, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def saturating_small(small):
    f = SpectralField.from_terms(small, FORCING)
    return SaturatingModel(MatrixField.constant(1.0, m=1), 0.5, -1, f, l_H=1.2)


@pytest.fixture(scope="session")
def pinched_small(small):
    f = SpectralField.from_terms(small, FORCING)
    return PinchedModel(MatrixField.constant(1.1, m=1), MatrixField.constant(1.3, m=1), f, l_H=1.3)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n].line())
