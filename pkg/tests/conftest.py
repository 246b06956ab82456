import numpy as np
import pytest

from nsiweak import EnergyProfile, Rect, build_structure_recipe, synthesize
from nsiweak.cantor import placeholder_base, placeholder_params, rescale_tower

U = Rect(0.0, 1.0, 1.0, 2.0)


@pytest.fixture(scope="session")
def unit_rect():
    return U


@pytest.fixture(scope="session")
def recipe():
    # wide rectangle: the annulus and the frame stay resolvable by 1e-5 finite differences
    return build_structure_recipe(Rect(0.0, 2.0, 1.0, 3.0), 0.3)


@pytest.fixture(scope="session")
def linear_run():
    return synthesize(U, 0.1, 1.0, EnergyProfile.linear(1.0, 0.0), nsi_samples=500, seed=0)


@pytest.fixture(scope="session")
def base():
    return placeholder_base()


@pytest.fixture(scope="session")
def tower(base):
    return rescale_tower(base, placeholder_params(), j_max=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
