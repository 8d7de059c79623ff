"""
Discrete Brownian bridge machinery: time grids, the U / K interpolation
operators, per-step bridge transitions and path samplers.
"""
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from dimf.errors import DimensionMismatchError, InvalidEpsilonError, InvalidTimeGridError
from dimf.gaussian import Gaussian

CouplingSampler = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class TimeGrid:
    """Times 0 = t_0 < t_1 < ... < t_N < t_{N+1} = 1 with N >= 1 inner moments."""
    times: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) < 3:
            raise InvalidTimeGridError(f"need at least one inner time, got {len(times)} times")
        if times[0] != 0.0 or times[-1] != 1.0:
            raise InvalidTimeGridError(f"time grid must start at 0 and end at 1, got {times[0]} and {times[-1]}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidTimeGridError(f"time grid must be strictly increasing: {times}")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, n_inner: int) -> "TimeGrid":
        """t_n = n / (N + 1)."""
        if n_inner < 1:
            raise InvalidTimeGridError(f"N must be >= 1, got {n_inner}")
        return cls(tuple(n / (n_inner + 1) for n in range(n_inner + 2)))

    @classmethod
    def from_inner(cls, inner: Sequence[float]) -> "TimeGrid":
        return cls((0.0, *inner, 1.0))

    @property
    def n_inner(self) -> int:
        return len(self.times) - 2

    @property
    def n_slices(self) -> int:
        return len(self.times)

    @property
    def inner_times(self) -> np.ndarray:
        return np.asarray(self.times[1:-1])


@dataclass(frozen=True, eq=False)
class BridgeOperators:
    """U (ND x 2D) and K (ND x ND) for a grid, dimension D and volatility epsilon."""
    grid: TimeGrid
    dim: int
    epsilon: float
    U: np.ndarray
    K: np.ndarray


@dataclass(frozen=True)
class BridgeStep:
    """Transition t_prev -> t_next of the bridge pinned at x1: mean slope and isotropic variance."""
    mean_slope: float
    variance: float

    @classmethod
    def between(cls, t_prev: float, t_next: float, epsilon: float) -> "BridgeStep":
        if not 0.0 <= t_prev < t_next <= 1.0:
            raise InvalidTimeGridError(f"need 0 <= t_prev < t_next <= 1, got {t_prev} -> {t_next}")
        slope = (t_next - t_prev) / (1.0 - t_prev)
        variance = epsilon * (t_next - t_prev) * (1.0 - t_next) / (1.0 - t_prev)
        return cls(mean_slope=slope, variance=variance)


def _check_epsilon(epsilon: float) -> None:
    if not epsilon > 0.0:
        raise InvalidEpsilonError(f"epsilon must be > 0, got {epsilon}")


def build_operators(grid: TimeGrid, d: int, epsilon: float) -> BridgeOperators:
    """
    Build the interpolation and bridge-covariance operators.

    Args:
        grid: Time grid with N inner moments
        d: State dimension D
        epsilon: Bridge volatility

    Returns:
        BridgeOperators with U row-block n = [(1 - t_n) I, t_n I] and
        K block (m, n) = t_min (1 - t_max) I
    """
    _check_epsilon(epsilon)
    if d < 1:
        raise DimensionMismatchError(f"dimension must be >= 1, got {d}")

    t = grid.inner_times
    eye = np.eye(d)
    u_scalar = np.stack([1.0 - t, t], axis=1)
    k_scalar = np.minimum.outer(t, t) * (1.0 - np.maximum.outer(t, t))
    return BridgeOperators(
        grid=grid,
        dim=d,
        epsilon=float(epsilon),
        U=np.kron(u_scalar, eye),
        K=np.kron(k_scalar, eye),
    )


def bridge_step(x_prev: np.ndarray, x1: np.ndarray, t_prev: float, t_next: float, epsilon: float) -> Gaussian:
    """Law of x_{t_next} given x_{t_prev} = x_prev and the endpoint x_1 = x1."""
    _check_epsilon(epsilon)
    x_prev = np.atleast_1d(np.asarray(x_prev, dtype=float))
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if x_prev.shape != x1.shape:
        raise DimensionMismatchError(f"x_prev {x_prev.shape} and x1 {x1.shape} differ")

    step = BridgeStep.between(t_prev, t_next, epsilon)
    mean = x_prev + step.mean_slope * (x1 - x_prev)
    return Gaussian(mean, step.variance * np.eye(x_prev.size))


def sample_bridge_path(
    x0: np.ndarray,
    x1: np.ndarray,
    grid: TimeGrid,
    epsilon: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Sample bridge paths pinned at x0 and x1.

    Args:
        x0: Start point(s), shape (d,) or (n, d)
        x1: End point(s), same shape as x0
        grid: Time grid
        epsilon: Bridge volatility
        rng: Random stream

    Returns:
        Paths of shape (N + 2, d) for a single pair or (n, N + 2, d) for a batch;
        the endpoints are copied, never resampled
    """
    _check_epsilon(epsilon)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if x0.shape != x1.shape:
        raise DimensionMismatchError(f"x0 {x0.shape} and x1 {x1.shape} differ")

    single = x0.ndim == 1
    start = np.atleast_2d(x0)
    end = np.atleast_2d(x1)

    path = np.empty((start.shape[0], grid.n_slices, start.shape[1]))
    path[:, 0] = start
    path[:, -1] = end

    times = grid.times
    for n in range(1, grid.n_slices - 1):
        step = BridgeStep.between(times[n - 1], times[n], epsilon)
        prev = path[:, n - 1]
        noise = rng.standard_normal(prev.shape)
        path[:, n] = prev + step.mean_slope * (end - prev) + np.sqrt(step.variance) * noise

    return path[0] if single else path


def reciprocal_sample(
    coupling_sampler: CouplingSampler,
    grid: TimeGrid,
    epsilon: float,
    rng: np.random.Generator,
    n: int = 1,
) -> np.ndarray:
    """
    Draw (x0, x1) pairs from a coupling sampler, then fill in bridge paths.

    Args:
        coupling_sampler: Callable (rng, n) -> (x0s, x1s), each (n, d)
        grid: Time grid
        epsilon: Bridge volatility
        rng: Random stream shared by the pair and bridge draws
        n: Number of paths

    Returns:
        One path of shape (N + 2, d) when n == 1, else paths of shape (n, N + 2, d)
    """
    x0s, x1s = coupling_sampler(rng, n)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    x1s = np.atleast_2d(np.asarray(x1s, dtype=float))
    if x0s.shape != x1s.shape or x0s.shape[0] != n:
        raise DimensionMismatchError(f"sampler returned {x0s.shape} and {x1s.shape} for n={n}")
    paths = sample_bridge_path(x0s, x1s, grid, epsilon, rng)
    return paths[0] if n == 1 else paths
