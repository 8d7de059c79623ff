import numpy as np
import pytest

from dimf.bridge import BridgeStep, TimeGrid, bridge_step, build_operators, reciprocal_sample, sample_bridge_path
from dimf.errors import DimensionMismatchError, DimfError, InvalidEpsilonError, InvalidTimeGridError


def test_uniform_grid():
    assert TimeGrid.uniform(3).times == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert TimeGrid.uniform(3).n_inner == 3


@pytest.mark.parametrize("times", [(0.0, 1.0), (0.0, 0.5, 0.5, 1.0), (0.1, 0.5, 1.0), (0.0, 0.7, 0.3, 1.0)])
def test_invalid_grids(times):
    with pytest.raises(InvalidTimeGridError):
        TimeGrid(times)


def test_from_inner_accepts_nonuniform():
    grid = TimeGrid.from_inner([0.1, 0.7])
    np.testing.assert_array_equal(grid.inner_times, [0.1, 0.7])


def test_operators_single_midpoint():
    ops = build_operators(TimeGrid.uniform(1), 1, 1.0)
    np.testing.assert_allclose(ops.U, [[0.5, 0.5]])
    np.testing.assert_allclose(ops.K, [[0.25]])


def test_operators_two_inner_points():
    ops = build_operators(TimeGrid.uniform(2), 1, 1.0)
    np.testing.assert_allclose(ops.U, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-15)
    np.testing.assert_allclose(ops.K, [[2 / 9, 1 / 9], [1 / 9, 2 / 9]], atol=1e-15)


def test_operators_expand_per_dimension():
    scalar = build_operators(TimeGrid.uniform(3), 1, 1.0)
    block = build_operators(TimeGrid.uniform(3), 2, 1.0)
    np.testing.assert_array_equal(block.U, np.kron(scalar.U, np.eye(2)))
    np.testing.assert_array_equal(block.K, np.kron(scalar.K, np.eye(2)))


def test_k_blocks_are_pairwise_bridge_covariances():
    grid = TimeGrid.from_inner([0.2, 0.3, 0.9])
    ops = build_operators(grid, 2, 1.0)
    t = grid.inner_times
    for m in range(3):
        for n in range(3):
            expected = min(t[m], t[n]) * (1.0 - max(t[m], t[n])) * np.eye(2)
            np.testing.assert_array_equal(ops.K[2 * m : 2 * m + 2, 2 * n : 2 * n + 2], expected)


def test_bridge_step_from_origin():
    g = bridge_step([0.0], [0.0], 0.0, 0.5, 1.0)
    assert g.mean[0] == pytest.approx(0.0)
    assert g.cov[0, 0] == pytest.approx(0.25)


def test_bridge_step_to_endpoint_is_pinned():
    g = bridge_step([0.3, -1.0], [2.0, 4.0], 0.6, 1.0, 3.0)
    np.testing.assert_allclose(g.mean, [2.0, 4.0])
    np.testing.assert_array_equal(g.cov, np.zeros((2, 2)))


def test_bridge_step_shifted():
    g = bridge_step([1.0], [3.0], 0.5, 0.75, 2.0)
    assert g.mean[0] == pytest.approx(2.0, abs=1e-12)
    assert g.cov[0, 0] == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("cuts", [(0.625,), (0.55, 0.6, 0.7)])
def test_chapman_kolmogorov(cuts):
    x1, eps = 3.0, 2.0
    times = (0.5, *cuts, 0.75)
    mean, var = 1.0, 0.0
    for t_prev, t_next in zip(times, times[1:]):
        step = BridgeStep.between(t_prev, t_next, eps)
        mean = mean + step.mean_slope * (x1 - mean)
        var = (1.0 - step.mean_slope) ** 2 * var + step.variance

    direct = bridge_step([1.0], [x1], 0.5, 0.75, eps)
    assert mean == pytest.approx(direct.mean[0], abs=1e-12)
    assert var == pytest.approx(direct.cov[0, 0], abs=1e-12)


def test_bridge_step_rejects_backwards_times():
    with pytest.raises(InvalidTimeGridError):
        bridge_step([0.0], [0.0], 0.5, 0.4, 1.0)
    with pytest.raises(DimensionMismatchError):
        bridge_step([0.0], [0.0, 1.0], 0.1, 0.4, 1.0)


def test_sampled_bridge_marginals(rng):
    grid = TimeGrid.uniform(3)
    n = 100_000
    paths = sample_bridge_path(np.zeros((n, 1)), np.zeros((n, 1)), grid, 1.0, rng)
    assert paths.shape == (n, 5, 1)

    for i, t in enumerate(grid.inner_times, start=1):
        var = t * (1.0 - t)
        assert abs(paths[:, i, 0].mean()) < 4 * np.sqrt(var / n)
        assert abs(paths[:, i, 0].var() - var) < 4 * np.sqrt(2.0 * var ** 2 / n)


def test_vanishing_volatility_is_linear_interpolation(rng):
    grid = TimeGrid.uniform(4)
    x0, x1 = np.array([1.0, -2.0]), np.array([3.0, 0.5])
    path = sample_bridge_path(x0, x1, grid, 1e-12, rng)
    t = np.asarray(grid.times)[:, None]
    np.testing.assert_allclose(path, (1.0 - t) * x0 + t * x1, atol=1e-5)


def test_endpoints_are_copied(rng):
    x0 = rng.standard_normal((50, 3))
    x1 = rng.standard_normal((50, 3))
    paths = sample_bridge_path(x0, x1, TimeGrid.uniform(2), 5.0, rng)
    np.testing.assert_array_equal(paths[:, 0], x0)
    np.testing.assert_array_equal(paths[:, -1], x1)


def test_reciprocal_sample_with_degenerate_pairs_is_a_bridge():
    grid = TimeGrid.uniform(2)

    def zeros(gen, count):
        return np.zeros((count, 2)), np.zeros((count, 2))

    via_sampler = reciprocal_sample(zeros, grid, 1.5, np.random.default_rng(3), n=200)
    direct = sample_bridge_path(np.zeros((200, 2)), np.zeros((200, 2)), grid, 1.5, np.random.default_rng(3))
    np.testing.assert_array_equal(via_sampler, direct)


def test_reciprocal_sample_checks_sampler_shape(rng):
    def wrong(gen, count):
        return np.zeros((count + 1, 1)), np.zeros((count + 1, 1))

    with pytest.raises(DimensionMismatchError):
        reciprocal_sample(wrong, TimeGrid.uniform(1), 1.0, rng, n=4)


def test_reciprocal_sample_single_path(rng):
    def pair(gen, count):
        return np.ones((count, 3)), np.full((count, 3), 2.0)

    path = reciprocal_sample(pair, TimeGrid.uniform(4), 1.0, rng)
    assert path.shape == (6, 3)
    np.testing.assert_array_equal(path[0], np.ones(3))
    np.testing.assert_array_equal(path[-1], np.full(3, 2.0))


@pytest.mark.parametrize("eps", [0.0, -1.0])
def test_non_positive_epsilon_is_a_dimf_error(eps):
    with pytest.raises(InvalidEpsilonError) as info:
        build_operators(TimeGrid.uniform(1), 1, eps)
    assert isinstance(info.value, DimfError) and isinstance(info.value, ValueError)
