"""
Independent ground truths for D-IMF: the closed-form Gaussian static SB
plan, a Gaussian IPF fixed point, grid Sinkhorn and a brute-force joint
for Gaussian Markov chains.
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import ot
from scipy import linalg

from dimf.errors import ConvergenceError, DimensionMismatchError, InvalidEpsilonError, MarginalMismatchError
from dimf.gauss_dimf import GaussianCoupling, GaussianMarkovChain, GaussianProcessJoint
from dimf.gaussian import Gaussian
from dimf.grid import GridCoupling, GridSpace
from dimf.utils.linalg_utils import psd_inv_sqrtm, psd_sqrtm, strict_cholesky, symmetrize

logger = logging.getLogger(__name__)

# The objective E||x0 - x1||^2 / 2 - eps * H(q) equals one half of
# E||x0 - x1||^2 + 2 * eps * KL(q || p0 x p1) up to a constant. The closed
# form below is written for full-quadratic cost with weight 2 * sigma^2 on
# the KL term, so full-quadratic weight = FULL_QUADRATIC_WEIGHT_FACTOR * eps
# and sigma^2 = SIGMA2_PER_EPSILON * eps.
FULL_QUADRATIC_WEIGHT_FACTOR = 2.0
SIGMA2_PER_EPSILON = FULL_QUADRATIC_WEIGHT_FACTOR / 2.0


def _check_pair(p0: Gaussian, p1: Gaussian, epsilon: float) -> None:
    if p0.dim != p1.dim:
        raise DimensionMismatchError(f"marginal dimensions differ: {p0.dim} vs {p1.dim}")
    if not epsilon > 0.0:
        raise InvalidEpsilonError(f"epsilon must be > 0, got {epsilon}")
    strict_cholesky(p0.cov)
    strict_cholesky(p1.cov)


def gaussian_sb_plan(p0: Gaussian, p1: Gaussian, epsilon: float) -> GaussianCoupling:
    """
    Entropic OT plan between two Gaussians for cost ||x0 - x1||^2 / 2.

    Args:
        p0: Law of x0 (PD covariance)
        p1: Law of x1 (PD covariance)
        epsilon: Entropy weight

    Returns:
        Coupling with cov(x0, x1) = (S0^1/2 D S0^-1/2 - sigma^2 I) / 2,
        D = (4 S0^1/2 S1 S0^1/2 + sigma^4 I)^1/2; marginal blocks are copied verbatim
    """
    _check_pair(p0, p1, epsilon)
    sigma2 = SIGMA2_PER_EPSILON * epsilon
    eye = np.eye(p0.dim)

    root0 = psd_sqrtm(p0.cov)
    inv_root0 = psd_inv_sqrtm(p0.cov)
    inner = psd_sqrtm(4.0 * root0 @ p1.cov @ root0 + sigma2 ** 2 * eye)
    cross = 0.5 * (root0 @ inner @ inv_root0 - sigma2 * eye)
    return GaussianCoupling.from_blocks(p0, p1, cross)


def unit_sb_correlation(epsilon: float) -> float:
    """Correlation of the plan between standard Gaussians, the positive root of rho^2 + eps * rho - 1."""
    if not epsilon > 0.0:
        raise InvalidEpsilonError(f"epsilon must be > 0, got {epsilon}")
    return float((np.sqrt(epsilon ** 2 + 4.0) - epsilon) / 2.0)


@dataclass(frozen=True)
class IpfState:
    iterations: int
    drift: float


def gaussian_ipf(
    p0: Gaussian,
    p1: Gaussian,
    epsilon: float,
    tol: float = 1e-12,
    max_iters: int = 10_000,
    return_state: bool = False,
) -> GaussianCoupling | tuple[GaussianCoupling, IpfState]:
    """
    Iterative proportional fitting in Gaussian natural parameters.

    Starts from the coupling proportional to p0(x0) p1(x1) exp(-||x0 - x1||^2 / (2 eps))
    and alternately rescales each side so its marginal matches, until the
    joint covariance and mean move by less than tol (max-norm).

    Args:
        p0: Law of x0
        p1: Law of x1
        epsilon: Entropy weight
        tol: Drift tolerance between sweeps
        max_iters: Sweep cap
        return_state: Also return the iteration count and final drift

    Returns:
        The fixed-point coupling (and its IpfState when requested)
    """
    _check_pair(p0, p1, epsilon)
    d = p0.dim
    kernel = np.eye(d) / epsilon

    target_prec = [linalg.inv(p0.cov), linalg.inv(p1.cov)]
    target_lin = [target_prec[0] @ p0.mean, target_prec[1] @ p1.mean]
    prec = [target_prec[0].copy(), target_prec[1].copy()]
    lin = [target_lin[0].copy(), target_lin[1].copy()]

    prev_mean = prev_cov = None
    drift = np.inf
    for it in range(1, max_iters + 1):
        for side in (0, 1):
            other = 1 - side
            # marginal of x_side: J_ss - J_so J_oo^-1 J_os with J_so = -I / eps
            other_inv = linalg.inv(prec[other] + kernel)
            marg_prec = prec[side] + kernel - kernel @ other_inv @ kernel
            marg_lin = lin[side] + kernel @ other_inv @ lin[other]
            prec[side] = symmetrize(prec[side] + target_prec[side] - marg_prec)
            lin[side] = lin[side] + target_lin[side] - marg_lin

        joint_prec = np.block([[prec[0] + kernel, -kernel], [-kernel, prec[1] + kernel]])
        cov = symmetrize(linalg.inv(joint_prec))
        mean = cov @ np.concatenate(lin)

        if prev_cov is not None:
            drift = max(np.max(np.abs(cov - prev_cov)), np.max(np.abs(mean - prev_mean)))
            if drift < tol:
                coupling = GaussianCoupling.from_blocks(p0, p1, cov[:d, d:])
                logger.debug("Gaussian IPF converged in %d sweeps (drift %.2e)", it, drift)
                return (coupling, IpfState(it, float(drift))) if return_state else coupling
        prev_cov, prev_mean = cov, mean

    raise ConvergenceError(f"Gaussian IPF did not converge in {max_iters} sweeps (drift {drift:.3e})")


@dataclass(frozen=True, eq=False)
class SinkhornState:
    """Dual log-scalings over the supported states, iteration count and marginal residual."""
    log_u: np.ndarray
    log_v: np.ndarray
    iterations: int
    residual: float

    @property
    def u(self) -> np.ndarray:
        return np.exp(self.log_u)

    @property
    def v(self) -> np.ndarray:
        return np.exp(self.log_v)


class _PlainUnderflow(Exception):
    pass


def _pot_sinkhorn(a: np.ndarray, b: np.ndarray, log_k: np.ndarray, tol: float, max_iters: int, method: str):
    # unit regularization so POT's -M / reg recovers log_k exactly
    with np.errstate(all="ignore"):
        return ot.sinkhorn(a, b, -log_k, 1.0, method=method, numItermax=max_iters, stopThr=tol, log=True, warn=False)


def _sinkhorn_state(log: dict, log_u: np.ndarray, log_v: np.ndarray, tol: float, max_iters: int) -> SinkhornState:
    residual = float(log["err"][-1]) if log["err"] else np.inf
    if not residual < tol:
        raise ConvergenceError(f"Sinkhorn did not converge in {max_iters} iterations (residual {residual:.3e})")
    return SinkhornState(np.asarray(log_u), np.asarray(log_v), int(log["niter"]) + 1, residual)


def _sinkhorn_log(a: np.ndarray, b: np.ndarray, log_k: np.ndarray, tol: float, max_iters: int):
    plan, log = _pot_sinkhorn(a, b, log_k, tol, max_iters, "sinkhorn_log")
    return plan, _sinkhorn_state(log, log["log_u"], log["log_v"], tol, max_iters)


def _sinkhorn_plain(a: np.ndarray, b: np.ndarray, log_k: np.ndarray, tol: float, max_iters: int):
    with np.errstate(under="ignore"):
        kernel = np.exp(log_k)
    if np.any(kernel.sum(axis=0) == 0.0) or np.any(kernel.sum(axis=1) == 0.0):
        raise _PlainUnderflow("Gibbs kernel has an all-zero row or column")

    # POT reports scalings leaving the float range through warnings.warn
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plan, log = _pot_sinkhorn(a, b, log_k, tol, max_iters, "sinkhorn")
    if any("numerical errors" in str(w.message) for w in caught) or not np.all(np.isfinite(plan)):
        raise _PlainUnderflow("scalings left the representable range")
    if np.any(log["u"] <= 0.0) or np.any(log["v"] <= 0.0):
        raise _PlainUnderflow("scalings underflowed to zero")
    return plan, _sinkhorn_state(log, np.log(log["u"]), np.log(log["v"]), tol, max_iters)


def grid_sinkhorn(
    p0: np.ndarray,
    p1: np.ndarray,
    space: GridSpace,
    epsilon: float,
    tol: float = 1e-12,
    max_iters: int = 100_000,
    log_kernel: np.ndarray | None = None,
    log_domain: bool = True,
    return_state: bool = False,
) -> GridCoupling | tuple[GridCoupling, SinkhornState]:
    """
    Static SB on a finite grid by matrix scaling.

    Args:
        p0: Source pmf over the grid
        p1: Target pmf over the grid
        space: Grid the pmfs live on
        epsilon: Entropy weight
        tol: Max-norm marginal residual to stop at
        max_iters: Iteration cap
        log_kernel: Log reference kernel; defaults to -||x0 - x1||^2 / (2 eps)
        log_domain: Iterate on log-scalings (default) or on plain scalings
        return_state: Also return the SinkhornState

    Returns:
        The optimal GridCoupling (and its SinkhornState when requested)
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if p0.shape != (space.size,) or p1.shape != (space.size,):
        raise DimensionMismatchError(f"pmfs {p0.shape}, {p1.shape} do not match {space.size} grid points")
    for label, pmf in (("p0", p0), ("p1", p1)):
        if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-12:
            raise MarginalMismatchError(f"{label} is not a pmf (sum {pmf.sum():.15f})")
    if not epsilon > 0.0:
        raise InvalidEpsilonError(f"epsilon must be > 0, got {epsilon}")

    if log_kernel is None:
        log_kernel = -space.sq_distances() / (2.0 * epsilon)

    # zero-mass states are removed, solved without, and re-embedded as zeros
    rows = p0 > 0
    cols = p1 > 0
    a, b = p0[rows], p1[cols]
    log_k = np.asarray(log_kernel, dtype=float)[np.ix_(rows, cols)]

    if log_domain:
        plan, state = _sinkhorn_log(a, b, log_k, tol, max_iters)
    else:
        try:
            plan, state = _sinkhorn_plain(a, b, log_k, tol, max_iters)
        except _PlainUnderflow as e:
            logger.warning("plain-domain Sinkhorn underflowed (%s); retrying in the log domain", e)
            plan, state = _sinkhorn_log(a, b, log_k, tol, max_iters)

    full = np.zeros((space.size, space.size))
    full[np.ix_(rows, cols)] = plan
    coupling = GridCoupling(full)
    return (coupling, state) if return_state else coupling


def affine_composition_joint(chain: GaussianMarkovChain) -> GaussianProcessJoint:
    """
    Joint of a Gaussian chain from its noise representation.

    Writes the path as T x = c + xi with T = I - (block subdiagonal of slopes)
    and xi ~ N(0, blockdiag(V_0, noise_1, ..., noise_{N+1})), then solves
    the triangular system instead of multiplying slopes together.
    """
    d = chain.dim
    n_slices = chain.grid.n_slices
    size = n_slices * d

    system = np.eye(size)
    shift = np.zeros(size)
    noise = np.zeros((size, size))
    shift[:d] = chain.initial.mean
    noise[:d, :d] = chain.initial.cov
    for n, kernel in enumerate(chain.transitions, start=1):
        rows = slice(n * d, (n + 1) * d)
        system[rows, (n - 1) * d : n * d] = -kernel.slope
        shift[rows] = kernel.offset
        noise[rows, rows] = kernel.noise

    mean = linalg.solve_triangular(system, shift, lower=True)
    left = linalg.solve_triangular(system, noise, lower=True)
    cov = linalg.solve_triangular(system, left.T, lower=True).T
    return GaussianProcessJoint(grid=chain.grid, dim=d, joint=Gaussian(mean, cov))
