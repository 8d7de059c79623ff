"""
Multivariate Gaussian algebra shared by every Gaussian-regime module:
marginals, Schur-complement conditionals, KL divergence, entropy,
Bures-Wasserstein metrics and sampling.

All values are immutable after construction and every function is pure;
random streams are passed in explicitly.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from dimf.errors import DimensionMismatchError, InvalidBlockError, NotPositiveDefiniteError
from dimf.utils.linalg_utils import (
    check_psd,
    logdet_from_cholesky,
    psd_sqrtm,
    solve_spd,
    stable_cholesky,
    strict_cholesky,
    symmetrize,
)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Gaussian:
    """N(mean, cov); cov is symmetrized on construction."""
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DimensionMismatchError(f"mean of length {mean.size} does not match cov of shape {cov.shape}")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(symmetrize(cov)))

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def standard(cls, dim: int) -> "Gaussian":
        return cls(np.zeros(dim), np.eye(dim))


@dataclass(frozen=True)
class BlockIndex:
    """Disjoint (start, length) blocks selecting variables inside a joint Gaussian."""
    offsets: tuple[tuple[int, int], ...]

    def __post_init__(self):
        offsets = tuple((int(start), int(length)) for start, length in self.offsets)
        if not offsets:
            raise InvalidBlockError("block index needs at least one block")
        seen: set[int] = set()
        for start, length in offsets:
            if start < 0 or length <= 0:
                raise InvalidBlockError(f"invalid block ({start}, {length})")
            span = set(range(start, start + length))
            if seen & span:
                raise InvalidBlockError(f"block ({start}, {length}) overlaps an earlier block")
            seen |= span
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def of(cls, *blocks: Sequence[int]) -> "BlockIndex":
        return cls(tuple(tuple(b) for b in blocks))

    def indices(self) -> np.ndarray:
        return np.concatenate([np.arange(start, start + length) for start, length in self.offsets])

    def validate(self, dim: int) -> np.ndarray:
        idx = self.indices()
        if idx.max() >= dim:
            raise InvalidBlockError(f"block index reaches {idx.max()} but the joint has dimension {dim}")
        return idx

    def complement(self, dim: int) -> np.ndarray:
        return np.setdiff1d(np.arange(dim), self.validate(dim))


def _check_same_dim(p: Gaussian, q: Gaussian) -> None:
    if p.dim != q.dim:
        raise DimensionMismatchError(f"dimensions differ: {p.dim} vs {q.dim}")


def gaussian_kl(p: Gaussian, q: Gaussian) -> float:
    """
    KL(p || q) in nats, closed form.

    Args:
        p: First Gaussian (PD covariance, one jitter retry)
        q: Second Gaussian (PD covariance, one jitter retry)

    Returns:
        0.5 * (tr(Sq^-1 Sp) + dmu^T Sq^-1 dmu - d + ln det Sq - ln det Sp), clamped at 0
    """
    _check_same_dim(p, q)
    chol_p = stable_cholesky(p.cov)
    chol_q = stable_cholesky(q.cov)

    # tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
    whitened = linalg.solve_triangular(chol_q, chol_p, lower=True)
    trace_term = float(np.sum(whitened * whitened))
    diff = linalg.solve_triangular(chol_q, q.mean - p.mean, lower=True)
    maha = float(diff @ diff)

    kl = 0.5 * (trace_term + maha - p.dim + logdet_from_cholesky(chol_q) - logdet_from_cholesky(chol_p))
    return max(kl, 0.0)


def gaussian_entropy(g: Gaussian) -> float:
    """Differential entropy in nats."""
    chol = strict_cholesky(g.cov)
    return 0.5 * (g.dim * np.log(2.0 * np.pi * np.e) + logdet_from_cholesky(chol))


def marginal(joint: Gaussian, block: BlockIndex) -> Gaussian:
    """Sub-vector of the mean and principal submatrix of the covariance (rows/cols gathered in block order)."""
    idx = block.validate(joint.dim)
    return Gaussian(joint.mean[idx], joint.cov[np.ix_(idx, idx)])


def condition(joint: Gaussian, observed_block: BlockIndex, value: np.ndarray) -> Gaussian:
    """
    Conditional of the unobserved variables given observed_block = value.

    Args:
        joint: Joint Gaussian
        observed_block: Variables being conditioned on
        value: Observed value, same length as the block

    Returns:
        Schur-complement conditional over the complement of observed_block
    """
    obs = observed_block.validate(joint.dim)
    rest = observed_block.complement(joint.dim)
    value = np.atleast_1d(np.asarray(value, dtype=float))
    if value.size != obs.size:
        raise DimensionMismatchError(f"value has length {value.size}, observed block has {obs.size}")
    if rest.size == 0:
        raise InvalidBlockError("conditioning on every variable leaves nothing to return")

    s_bb = joint.cov[np.ix_(obs, obs)]
    s_ab = joint.cov[np.ix_(rest, obs)]
    gain = solve_spd(s_bb, s_ab.T).T
    mean = joint.mean[rest] + gain @ (value - joint.mean[obs])
    cov = joint.cov[np.ix_(rest, rest)] - gain @ s_ab.T
    return Gaussian(mean, cov)


def sample(g: Gaussian, rng: np.random.Generator, n: int) -> np.ndarray:
    """
    Draw n samples as an (n, d) matrix.

    The covariance is factorized with one 1e-12 jitter retry, so PSD
    (including zero) covariances are accepted.
    """
    chol = stable_cholesky(g.cov)
    return g.mean + rng.standard_normal((n, g.dim)) @ chol.T


def bw2_metrics(p: Gaussian, q: Gaussian) -> tuple[float, float]:
    """
    Bures-Wasserstein squared distance and its unexplained-variance percentage.

    Args:
        p: Reference Gaussian (normalizes the UVP)
        q: Compared Gaussian

    Returns:
        (bw2_squared, uvp_percent) with uvp = 100 * bw2 / (0.5 * tr Sp)
    """
    _check_same_dim(p, q)
    check_psd(q.cov)
    root_p = psd_sqrtm(p.cov)
    cross = psd_sqrtm(root_p @ q.cov @ root_p)

    diff = p.mean - q.mean
    bw2 = float(diff @ diff + np.trace(p.cov) + np.trace(q.cov) - 2.0 * np.trace(cross))
    bw2 = max(bw2, 0.0)

    half_var = 0.5 * float(np.trace(p.cov))
    if half_var <= 0.0:
        raise NotPositiveDefiniteError("reference covariance has zero trace; UVP undefined")
    return bw2, 100.0 * bw2 / half_var
