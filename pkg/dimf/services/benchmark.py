import numpy as np

from dimf.errors import DimensionMismatchError
from dimf.gauss_dimf import GaussianCoupling
from dimf.gaussian import Gaussian
from dimf.utils.linalg_utils import random_orthogonal, random_spd, symmetrize

LOG_EIGEN_RANGE = np.log(2.0)


def benchmark_gaussian(rng: np.random.Generator, dim: int) -> Gaussian:
    """Centered Gaussian with a uniformly random eigenbasis and eigenvalues exp(U[-ln 2, ln 2])."""
    basis = random_orthogonal(rng, dim)
    eigenvalues = np.exp(rng.uniform(-LOG_EIGEN_RANGE, LOG_EIGEN_RANGE, size=dim))
    return Gaussian(np.zeros(dim), symmetrize((basis * eigenvalues) @ basis.T))


def make_benchmark_gaussians(dim: int, seed: int) -> tuple[Gaussian, Gaussian]:
    """
    The (p0, p1) pair of the Gaussian convergence study.

    Args:
        dim: Dimension D >= 1
        seed: Seed of the generator; equal seeds give identical pairs

    Returns:
        Two independent draws of benchmark_gaussian
    """
    if dim < 1:
        raise DimensionMismatchError(f"dimension must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    return benchmark_gaussian(rng, dim), benchmark_gaussian(rng, dim)


def random_gaussian(rng: np.random.Generator, dim: int) -> Gaussian:
    """Gaussian with a standard normal mean and a random SPD covariance."""
    return Gaussian(rng.standard_normal(dim), random_spd(rng, dim))


def random_coupling(rng: np.random.Generator, dim: int) -> GaussianCoupling:
    """Gaussian coupling over (x0, x1) with a random SPD 2D x 2D covariance."""
    return GaussianCoupling(rng.standard_normal(2 * dim), random_spd(rng, 2 * dim))
