"""
Agreement between the independent static-SB ground truths: closed-form
Gaussian plan, Gaussian IPF and 1D grid Sinkhorn.
"""
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np

from dimf.gaussian import Gaussian, bw2_metrics
from dimf.grid import GridCoupling, GridSpace, discretized_gaussian
from dimf.models.config import ExperimentConfig
from dimf.models.summary import CheckResult, SweepSummary
from dimf.oracle import gaussian_ipf, gaussian_sb_plan, grid_sinkhorn
from dimf.services.benchmark import random_gaussian
from dimf.types import ExperimentMode
from dimf.utils.io_utils import write_model_json

logger = logging.getLogger(__name__)

UVP_TOL = 1e-8  # percent
COV_ENTRY_TOL = 1e-8
GRID_CORRELATION_TOL = 1e-3
STATIONARITY_TOL = 1e-10
SINKHORN_DOMAIN_TOL = 1e-10


def grid_correlation(plan: GridCoupling, space: GridSpace) -> float:
    """Correlation of (x0, x1) under a 1D grid coupling."""
    x = space.points[:, 0]
    m0, m1 = plan.p0 @ x, plan.p1 @ x
    v0 = plan.p0 @ (x - m0) ** 2
    v1 = plan.p1 @ (x - m1) ** 2
    cov = (x - m0) @ plan.pi @ (x - m1)
    return float(cov / np.sqrt(v0 * v1))


def closed_form_vs_ipf(config: ExperimentConfig, rng: np.random.Generator) -> List[CheckResult]:
    worst_uvp = worst_entry = 0.0
    for _ in range(config.oracle_instances):
        p0 = random_gaussian(rng, config.oracle_dim)
        p1 = random_gaussian(rng, config.oracle_dim)
        for eps in config.eps:
            plan = gaussian_sb_plan(p0, p1, eps)
            ipf = gaussian_ipf(p0, p1, eps)
            _, uvp = bw2_metrics(plan.as_gaussian(), ipf.as_gaussian())
            worst_uvp = max(worst_uvp, uvp)
            worst_entry = max(worst_entry, float(np.max(np.abs(plan.sigma - ipf.sigma))))

    context = dict(instances=config.oracle_instances, dim=config.oracle_dim)
    return [
        CheckResult.of("plan_vs_ipf_bw2_uvp", worst_uvp, UVP_TOL, **context),
        CheckResult.of("plan_vs_ipf_cov_entries", worst_entry, COV_ENTRY_TOL, **context),
    ]


def grid_vs_closed_form(config: ExperimentConfig) -> List[CheckResult]:
    """Unit 1D Gaussians: Sinkhorn on a fine grid, the closed form and the stationarity equation."""
    half = config.oracle_grid_range
    space = GridSpace.uniform(-half, half, config.oracle_grid_points)
    pmf = discretized_gaussian(space, 0.0, 1.0)
    unit = Gaussian.standard(1)

    worst_corr = worst_root = worst_domain = 0.0
    for eps in config.eps:
        rho = float(gaussian_sb_plan(unit, unit, eps).correlation()[0, 0])
        worst_root = max(worst_root, abs(rho ** 2 + eps * rho - 1.0))

        plan = grid_sinkhorn(pmf, pmf, space, eps)
        worst_corr = max(worst_corr, abs(grid_correlation(plan, space) - rho))

        plain = grid_sinkhorn(pmf, pmf, space, eps, log_domain=False)
        worst_domain = max(worst_domain, float(np.max(np.abs(plan.pi - plain.pi))))
        logger.debug("eps=%g: closed-form rho %.8f, grid rho %.8f", eps, rho, grid_correlation(plan, space))

    context = dict(grid_points=config.oracle_grid_points, grid_range=half)
    return [
        CheckResult.of("grid_vs_closed_form_correlation", worst_corr, GRID_CORRELATION_TOL, **context),
        CheckResult.of("closed_form_stationarity", worst_root, STATIONARITY_TOL),
        CheckResult.of("sinkhorn_log_vs_plain", worst_domain, SINKHORN_DOMAIN_TOL, **context),
    ]


def run_oracle_check(config: ExperimentConfig, out_dir: Optional[Path] = None) -> SweepSummary:
    """
    Run the agreement suite and write summary.json.

    Returns:
        SweepSummary whose checks carry every residual; callers decide
        what a failure means (the CLI exits with status 2)
    """
    out_dir = Path(out_dir or config.output_dir)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed]))

    checks = closed_form_vs_ipf(config, rng) + grid_vs_closed_form(config)
    for check in checks:
        logger.info("%s: residual %.3e (tolerance %g)", check.name, check.residual, check.tolerance)

    summary = SweepSummary(mode=ExperimentMode.ORACLE_CHECK, config=config, checks=checks)
    write_model_json(out_dir / "summary.json", summary)
    return summary
