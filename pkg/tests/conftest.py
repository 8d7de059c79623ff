import numpy as np
import pytest

from dimf.bridge import TimeGrid
from dimf.gauss_dimf import GaussianCoupling
from dimf.gaussian import Gaussian
from dimf.grid import GridSpace, discretized_gaussian


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_1d():
    return Gaussian.standard(1)


@pytest.fixture
def independent_unit_1d(unit_1d):
    """Independent standard normals over (x0, x1)."""
    return GaussianCoupling.independent(unit_1d, unit_1d)


@pytest.fixture
def midpoint_grid():
    return TimeGrid.uniform(1)


@pytest.fixture
def small_space():
    return GridSpace.uniform(-2.0, 2.0, 7)


@pytest.fixture
def small_marginals(small_space):
    return (
        discretized_gaussian(small_space, -0.4, 0.7),
        discretized_gaussian(small_space, 0.3, 0.9),
    )
