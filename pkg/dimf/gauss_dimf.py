"""
Closed-form D-IMF for Gaussian couplings.

Processes are stored in chronological slice order (x_0, x_t1, ..., x_1).
The reciprocal projection is assembled in the (x_in, x_01) layout and
permuted once; the Markovian projection reads consecutive slice blocks.
"""
import logging
import time
from dataclasses import dataclass

import numpy as np

from dimf.bridge import TimeGrid, build_operators, reciprocal_sample
from dimf.errors import DimensionMismatchError, MarginalMismatchError
from dimf.gaussian import BlockIndex, Gaussian, gaussian_entropy, gaussian_kl, marginal, sample
from dimf.trace import ConvergenceTrace
from dimf.utils.linalg_utils import check_psd, solve_spd, strict_cholesky, symmetrize

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1e-10
MAX_ITERS_CAP = 100_000
MARGINAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GaussianCoupling:
    """Joint Gaussian over (x0, x1): mean (mu0, mu1) and 2D x 2D covariance."""
    mu01: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        g = Gaussian(self.mu01, self.sigma)
        if g.dim % 2:
            raise DimensionMismatchError(f"coupling needs an even joint dimension, got {g.dim}")
        strict_cholesky(g.cov)
        object.__setattr__(self, "mu01", g.mean)
        object.__setattr__(self, "sigma", g.cov)

    @property
    def dim(self) -> int:
        return self.mu01.size // 2

    @property
    def mu0(self) -> np.ndarray:
        return self.mu01[: self.dim]

    @property
    def mu1(self) -> np.ndarray:
        return self.mu01[self.dim :]

    @property
    def sigma0(self) -> np.ndarray:
        return self.sigma[: self.dim, : self.dim]

    @property
    def sigma1(self) -> np.ndarray:
        return self.sigma[self.dim :, self.dim :]

    @property
    def sigma_cov(self) -> np.ndarray:
        """cov(x0, x1), the off-diagonal D x D block."""
        return self.sigma[: self.dim, self.dim :]

    def as_gaussian(self) -> Gaussian:
        return Gaussian(self.mu01, self.sigma)

    def marginals(self) -> tuple[Gaussian, Gaussian]:
        return Gaussian(self.mu0, self.sigma0), Gaussian(self.mu1, self.sigma1)

    def correlation(self) -> np.ndarray:
        """Entrywise correlation between x0 and x1 coordinates."""
        s0 = np.sqrt(np.diag(self.sigma0))
        s1 = np.sqrt(np.diag(self.sigma1))
        return self.sigma_cov / np.outer(s0, s1)

    @classmethod
    def from_blocks(cls, p0: Gaussian, p1: Gaussian, cross: np.ndarray) -> "GaussianCoupling":
        if p0.dim != p1.dim:
            raise DimensionMismatchError(f"marginal dimensions differ: {p0.dim} vs {p1.dim}")
        cross = np.asarray(cross, dtype=float)
        sigma = np.block([[p0.cov, cross], [cross.T, p1.cov]])
        return cls(np.concatenate([p0.mean, p1.mean]), sigma)

    @classmethod
    def independent(cls, p0: Gaussian, p1: Gaussian) -> "GaussianCoupling":
        return cls.from_blocks(p0, p1, np.zeros((p0.dim, p1.dim)))


@dataclass(frozen=True, eq=False)
class GaussianProcessJoint:
    """Joint Gaussian over all N + 2 slices of a time grid, chronological layout."""
    grid: TimeGrid
    dim: int
    joint: Gaussian

    def __post_init__(self):
        expected = self.grid.n_slices * self.dim
        if self.joint.dim != expected:
            raise DimensionMismatchError(f"joint has dimension {self.joint.dim}, grid needs {expected}")

    @property
    def mean(self) -> np.ndarray:
        return self.joint.mean

    @property
    def cov(self) -> np.ndarray:
        return self.joint.cov

    def slice_block(self, i: int) -> BlockIndex:
        return BlockIndex(((i * self.dim, self.dim),))

    def slice_mean(self, i: int) -> np.ndarray:
        return self.mean[i * self.dim : (i + 1) * self.dim]

    def block(self, i: int, j: int) -> np.ndarray:
        """(Sigma)_{t_i, t_j}."""
        d = self.dim
        return self.cov[i * d : (i + 1) * d, j * d : (j + 1) * d]

    def slice_marginal(self, i: int) -> Gaussian:
        return marginal(self.joint, self.slice_block(i))

    def coupling(self) -> GaussianCoupling:
        last = self.grid.n_slices - 1
        g = marginal(self.joint, BlockIndex(((0, self.dim), (last * self.dim, self.dim))))
        return GaussianCoupling(g.mean, g.cov)


@dataclass(frozen=True, eq=False)
class AffineGaussianKernel:
    """x_next ~ N(offset + slope @ x_prev, noise)."""
    slope: np.ndarray
    offset: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        noise = symmetrize(self.noise)
        check_psd(noise)
        object.__setattr__(self, "slope", np.asarray(self.slope, dtype=float))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))
        object.__setattr__(self, "noise", noise)


@dataclass(frozen=True, eq=False)
class GaussianMarkovChain:
    """Initial law at t_0 followed by N + 1 affine-Gaussian transitions."""
    grid: TimeGrid
    initial: Gaussian
    transitions: tuple[AffineGaussianKernel, ...]

    def __post_init__(self):
        transitions = tuple(self.transitions)
        if len(transitions) != self.grid.n_slices - 1:
            raise DimensionMismatchError(
                f"chain needs {self.grid.n_slices - 1} transitions, got {len(transitions)}"
            )
        object.__setattr__(self, "transitions", transitions)

    @property
    def dim(self) -> int:
        return self.initial.dim

    def slopes_product(self) -> np.ndarray:
        """G = A_{N+1} ... A_1 (latest step leftmost)."""
        product = np.eye(self.dim)
        for kernel in self.transitions:
            product = kernel.slope @ product
        return product


def reciprocal_projection(coupling: GaussianCoupling, grid: TimeGrid, epsilon: float) -> GaussianProcessJoint:
    """
    Pin the coupling's endpoints and fill the inner slices with Brownian bridges.

    Args:
        coupling: Gaussian law of (x0, x1)
        grid: Time grid
        epsilon: Bridge volatility

    Returns:
        Chronological process joint whose (x0, x1) marginal is the coupling, exactly
    """
    d = coupling.dim
    ops = build_operators(grid, d, epsilon)
    sigma = coupling.sigma

    u_sigma = ops.U @ sigma
    inner_cov = epsilon * ops.K + u_sigma @ ops.U.T
    mean_blocked = np.concatenate([ops.U @ coupling.mu01, coupling.mu01])
    cov_blocked = np.block([[inner_cov, u_sigma], [u_sigma.T, sigma]])

    # (x_in, x0, x1) -> (x0, x_in, x1)
    n_in = grid.n_inner * d
    perm = np.concatenate([np.arange(n_in, n_in + d), np.arange(n_in), np.arange(n_in + d, n_in + 2 * d)])
    joint = Gaussian(mean_blocked[perm], cov_blocked[np.ix_(perm, perm)])
    return GaussianProcessJoint(grid=grid, dim=d, joint=joint)


def markovian_projection(proc: GaussianProcessJoint) -> tuple[GaussianMarkovChain, GaussianCoupling]:
    """
    Closest Markov chain to a Gaussian process, and the coupling it induces.

    Args:
        proc: Chronological process joint

    Returns:
        (chain, coupling); the coupling's cross block is cov(x0, x1) = Sigma_0 G^T
        with G = A_{N+1} ... A_1
    """
    n_slices = proc.grid.n_slices
    transitions = []
    for n in range(1, n_slices):
        prev_cov = proc.block(n - 1, n - 1)
        cross = proc.block(n, n - 1)
        slope = solve_spd(prev_cov, cross.T).T
        noise = proc.block(n, n) - slope @ cross.T
        offset = proc.slice_mean(n) - slope @ proc.slice_mean(n - 1)
        transitions.append(AffineGaussianKernel(slope=slope, offset=offset, noise=noise))

    chain = GaussianMarkovChain(grid=proc.grid, initial=proc.slice_marginal(0), transitions=tuple(transitions))

    sigma0 = proc.block(0, 0)
    last = n_slices - 1
    coupling = GaussianCoupling.from_blocks(
        Gaussian(proc.slice_mean(0), sigma0),
        Gaussian(proc.slice_mean(last), proc.block(last, last)),
        sigma0 @ chain.slopes_product().T,
    )
    return chain, coupling


def chain_to_joint(chain: GaussianMarkovChain) -> GaussianProcessJoint:
    """Compose the chain's affine kernels into the joint over every slice."""
    d = chain.dim
    n_slices = chain.grid.n_slices

    means = [chain.initial.mean]
    variances = [chain.initial.cov]
    for kernel in chain.transitions:
        means.append(kernel.offset + kernel.slope @ means[-1])
        variances.append(symmetrize(kernel.slope @ variances[-1] @ kernel.slope.T + kernel.noise))

    cov = np.zeros((n_slices * d, n_slices * d))
    for i in range(n_slices):
        cov[i * d : (i + 1) * d, i * d : (i + 1) * d] = variances[i]
        # cov(x_tj, x_ti) = A_j ... A_{i+1} V_i
        block = variances[i]
        for j in range(i + 1, n_slices):
            block = chain.transitions[j - 1].slope @ block
            cov[j * d : (j + 1) * d, i * d : (i + 1) * d] = block
            cov[i * d : (i + 1) * d, j * d : (j + 1) * d] = block.T

    return GaussianProcessJoint(grid=chain.grid, dim=d, joint=Gaussian(np.concatenate(means), cov))


def sample_chain(chain: GaussianMarkovChain, rng: np.random.Generator, n: int) -> np.ndarray:
    """Simulate n paths of the chain, shape (n, N + 2, D)."""
    paths = np.empty((n, chain.grid.n_slices, chain.dim))
    paths[:, 0] = sample(chain.initial, rng, n)
    for step, kernel in enumerate(chain.transitions, start=1):
        noise = sample(Gaussian(np.zeros(chain.dim), kernel.noise), rng, n)
        paths[:, step] = kernel.offset + paths[:, step - 1] @ kernel.slope.T + noise
    return paths


def sample_gaussian_reciprocal(
    coupling: GaussianCoupling,
    grid: TimeGrid,
    epsilon: float,
    rng: np.random.Generator,
    n: int,
) -> np.ndarray:
    """Sample n paths of the reciprocal process built on a Gaussian coupling."""
    d = coupling.dim

    def pair_sampler(gen: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        pairs = sample(coupling.as_gaussian(), gen, count)
        return pairs[:, :d], pairs[:, d:]

    return reciprocal_sample(pair_sampler, grid, epsilon, rng, n)


def process_kl(p: GaussianProcessJoint, q: GaussianProcessJoint) -> float:
    """KL between two full process joints on the same grid."""
    if p.grid != q.grid or p.dim != q.dim:
        raise DimensionMismatchError("process joints live on different grids or dimensions")
    return gaussian_kl(p.joint, q.joint)


def eot_objective(coupling: GaussianCoupling, epsilon: float) -> float:
    """E ||x0 - x1||^2 / 2 - epsilon * Entropy(q), closed form."""
    diff = coupling.mu0 - coupling.mu1
    cost = 0.5 * (
        np.trace(coupling.sigma0) + np.trace(coupling.sigma1) - 2.0 * np.trace(coupling.sigma_cov) + diff @ diff
    )
    return float(cost - epsilon * gaussian_entropy(coupling.as_gaussian()))


def gaussian_sb_process(p0: Gaussian, p1: Gaussian, grid: TimeGrid, epsilon: float) -> GaussianProcessJoint:
    """Finite-dimensional projection of the Schrodinger bridge: SB plan plus Brownian bridges."""
    from dimf.oracle import gaussian_sb_plan

    return reciprocal_projection(gaussian_sb_plan(p0, p1, epsilon), grid, epsilon)


@dataclass(frozen=True, eq=False)
class DimfOptions:
    oracle: GaussianCoupling
    max_iters: int = MAX_ITERS_CAP
    threshold: float = DEFAULT_THRESHOLD
    stop_at_threshold: bool = True
    record_wall_time: bool = True


def _check_marginals(coupling: GaussianCoupling, p0: Gaussian, p1: Gaussian, tol: float) -> None:
    for label, got, want in (("p0", coupling.marginals()[0], p0), ("p1", coupling.marginals()[1], p1)):
        if got.dim != want.dim:
            raise DimensionMismatchError(f"{label} has dimension {want.dim}, coupling marginal has {got.dim}")
        gap = max(np.max(np.abs(got.mean - want.mean)), np.max(np.abs(got.cov - want.cov)))
        if gap > tol:
            raise MarginalMismatchError(f"initial coupling misses {label} by {gap:.3e} (tolerance {tol:g})")


def dimf_run(
    p0: Gaussian,
    p1: Gaussian,
    init: GaussianCoupling,
    grid: TimeGrid,
    epsilon: float,
    opts: DimfOptions,
) -> tuple[GaussianCoupling, ConvergenceTrace]:
    """
    Alternate reciprocal and Markovian projections from an initial coupling.

    Args:
        p0: Required law of x0
        p1: Required law of x1
        init: Starting coupling with marginals (p0, p1)
        grid: Time grid
        epsilon: Bridge volatility
        opts: Oracle coupling, iteration cap and threshold

    Returns:
        (final coupling, trace) where every trace record is one
        reciprocal + Markovian projection
    """
    _check_marginals(init, p0, p1, MARGINAL_TOL)
    if opts.oracle.dim != init.dim:
        raise DimensionMismatchError(f"oracle has dimension {opts.oracle.dim}, coupling has {init.dim}")
    max_iters = min(opts.max_iters, MAX_ITERS_CAP)

    oracle = opts.oracle.as_gaussian()
    coupling = init
    trace = ConvergenceTrace(initial_kl=gaussian_kl(init.as_gaussian(), oracle))

    for _ in range(max_iters):
        started = time.perf_counter()
        proc = reciprocal_projection(coupling, grid, epsilon)
        _, updated = markovian_projection(proc)
        wall_ms = (time.perf_counter() - started) * 1e3 if opts.record_wall_time else 0.0

        kl = gaussian_kl(updated.as_gaussian(), oracle)
        record = trace.append(
            kl_to_oracle=kl,
            kl_step=gaussian_kl(updated.as_gaussian(), coupling.as_gaussian()),
            wall_ms=wall_ms,
        )
        logger.debug("iter %d: KL to oracle %.3e", record.iteration, kl)
        coupling = updated

        if opts.stop_at_threshold and kl < opts.threshold:
            break
    else:
        if opts.stop_at_threshold:
            logger.warning(
                "D-IMF did not reach KL < %g in %d iterations (eps=%g, N=%d)",
                opts.threshold, max_iters, epsilon, grid.n_inner,
            )

    return coupling, trace
