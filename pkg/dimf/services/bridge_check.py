"""
Projection correctness checks: Monte-Carlo validation of the reciprocal
projection covariance, the Markovian cross-covariance product against
brute-force affine composition, and marginal preservation in both regimes.
"""
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np

from dimf.bridge import TimeGrid
from dimf.gauss_dimf import (
    chain_to_joint,
    markovian_projection,
    reciprocal_projection,
    sample_gaussian_reciprocal,
)
from dimf.grid import (
    GridSpace,
    build_bridge_kernels,
    grid_markovian_projection,
    grid_reciprocal_projection,
    random_grid_coupling,
)
from dimf.models.config import ExperimentConfig
from dimf.models.summary import CheckResult, SweepSummary
from dimf.oracle import affine_composition_joint
from dimf.services.benchmark import random_coupling
from dimf.types import Direction, ExperimentMode
from dimf.utils.io_utils import write_model_json

logger = logging.getLogger(__name__)

COMPOSITION_TOL = 1e-10
MARGINAL_TOL = 1e-10
MAX_COMPOSITION_DIM = 8
MAX_COMPOSITION_N = 16
MAX_GRID_POINTS = 8
MAX_GRID_N = 3


def monte_carlo_sigmas(
    rng: np.random.Generator,
    dim: int,
    grid: TimeGrid,
    epsilon: float,
    n_paths: int,
) -> float:
    """
    Largest deviation, in standard errors, between the projected joint and sampled paths.

    Covers every mean entry and every covariance entry on or above the diagonal.
    """
    coupling = random_coupling(rng, dim)
    joint = reciprocal_projection(coupling, grid, epsilon)
    paths = sample_gaussian_reciprocal(coupling, grid, epsilon, rng, n_paths).reshape(n_paths, -1)

    mean, cov = joint.mean, joint.cov
    var = np.diag(cov)
    mean_err = np.abs(paths.mean(axis=0) - mean) / np.sqrt(var / n_paths)

    centered = paths - mean
    empirical = centered.T @ centered / n_paths
    # var of a product of centered jointly Gaussian coordinates
    se = np.sqrt((np.outer(var, var) + cov ** 2) / n_paths)
    upper = np.triu_indices_from(cov)
    cov_err = np.abs(empirical - cov)[upper] / se[upper]
    return float(max(mean_err.max(), cov_err.max()))


def reciprocal_monte_carlo(config: ExperimentConfig) -> List[CheckResult]:
    checks = []
    for i_eps, eps in enumerate(config.eps):
        for i_n, n_inner in enumerate(config.n_inner):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, i_eps, i_n]))
            worst = monte_carlo_sigmas(rng, config.dim, config.time_grid_for(n_inner), eps, config.mc_paths)
            logger.info("Monte-Carlo eps=%g N=%d: worst deviation %.2f standard errors", eps, n_inner, worst)
            checks.append(
                CheckResult.of(
                    "reciprocal_covariance_monte_carlo", worst, config.mc_sigmas, eps=eps, n_inner=n_inner
                )
            )
    return checks


def cross_covariance_composition(config: ExperimentConfig, rng: np.random.Generator) -> CheckResult:
    """Markovian projection's Sigma_0 G^T against the triangular-solve joint of the same chain."""
    worst = 0.0
    for _ in range(config.projection_instances):
        dim = int(rng.integers(1, MAX_COMPOSITION_DIM + 1))
        grid = TimeGrid.uniform(int(rng.integers(1, MAX_COMPOSITION_N + 1)))
        eps = float(rng.choice(config.eps))

        chain, coupling = markovian_projection(reciprocal_projection(random_coupling(rng, dim), grid, eps))
        brute = affine_composition_joint(chain).coupling()
        worst = max(worst, float(np.max(np.abs(coupling.sigma_cov - brute.sigma_cov))))
    return CheckResult.of("cross_covariance_composition", worst, COMPOSITION_TOL)


def gaussian_marginal_preservation(config: ExperimentConfig, rng: np.random.Generator) -> List[CheckResult]:
    coupling_gap = slice_gap = 0.0
    for _ in range(config.projection_instances):
        dim = int(rng.integers(1, MAX_COMPOSITION_DIM + 1))
        grid = TimeGrid.uniform(int(rng.integers(1, MAX_GRID_N + 1)))
        eps = float(rng.choice(config.eps))

        coupling = random_coupling(rng, dim)
        proc = reciprocal_projection(coupling, grid, eps)
        kept = proc.coupling()
        coupling_gap = max(
            coupling_gap,
            float(np.max(np.abs(kept.sigma - coupling.sigma))),
            float(np.max(np.abs(kept.mu01 - coupling.mu01))),
        )

        chain, _ = markovian_projection(proc)
        rebuilt = chain_to_joint(chain)
        for i in range(grid.n_slices):
            before, after = proc.slice_marginal(i), rebuilt.slice_marginal(i)
            slice_gap = max(
                slice_gap,
                float(np.max(np.abs(before.cov - after.cov))),
                float(np.max(np.abs(before.mean - after.mean))),
            )

    return [
        CheckResult.of("gaussian_reciprocal_keeps_coupling", coupling_gap, 0.0),
        CheckResult.of("gaussian_markovian_keeps_slices", slice_gap, MARGINAL_TOL),
    ]


def grid_marginal_preservation(config: ExperimentConfig, rng: np.random.Generator) -> List[CheckResult]:
    coupling_gap = slice_gap = 0.0
    for _ in range(config.projection_instances):
        size = int(rng.integers(2, MAX_GRID_POINTS + 1))
        grid = TimeGrid.uniform(int(rng.integers(1, MAX_GRID_N + 1)))
        eps = float(rng.choice(config.eps))
        kernels = build_bridge_kernels(GridSpace.uniform(config.grid_low, config.grid_high, size), grid, eps)

        coupling = random_grid_coupling(rng, size)
        proc = grid_reciprocal_projection(coupling, kernels)
        coupling_gap = max(coupling_gap, float(np.max(np.abs(proc.endpoint_form().coupling - coupling.pi))))

        before = proc.time_marginals()
        for direction in Direction:
            after = grid_markovian_projection(proc, direction).time_marginals()
            slice_gap = max(slice_gap, max(float(np.max(np.abs(a - b))) for a, b in zip(before, after)))

    return [
        CheckResult.of("grid_reciprocal_keeps_coupling", coupling_gap, 0.0),
        CheckResult.of("grid_markovian_keeps_slices", slice_gap, MARGINAL_TOL),
    ]


def run_bridge_check(config: ExperimentConfig, out_dir: Optional[Path] = None) -> SweepSummary:
    """
    Run every projection check and write summary.json.

    Monte-Carlo runs use the stream SeedSequence([seed, i_eps, i_n]); the
    randomized projection suites share one stream seeded with [seed].
    """
    out_dir = Path(out_dir or config.output_dir)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed]))

    checks = reciprocal_monte_carlo(config)
    checks.append(cross_covariance_composition(config, rng))
    checks += gaussian_marginal_preservation(config, rng)
    checks += grid_marginal_preservation(config, rng)

    summary = SweepSummary(mode=ExperimentMode.BRIDGE_CHECK, config=config, checks=checks)
    write_model_json(out_dir / "summary.json", summary)
    return summary
