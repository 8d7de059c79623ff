import numpy as np
from scipy import linalg

from dimf.errors import NotPositiveDefiniteError

CHOLESKY_JITTER = 1e-12
EIGEN_FLOOR = 1e-14


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """Return (A + A^T) / 2 as a float array."""
    mat = np.asarray(mat, dtype=float)
    return 0.5 * (mat + mat.T)


def stable_cholesky(mat: np.ndarray, jitter: float = CHOLESKY_JITTER) -> np.ndarray:
    """
    Lower Cholesky factor with one retry after adding jitter * I.

    Args:
        mat: Symmetric matrix expected to be positive definite
        jitter: Diagonal shift used for the single retry

    Returns:
        Lower-triangular factor L with L @ L.T == mat (+ jitter * I on retry)
    """
    mat = np.asarray(mat, dtype=float)
    try:
        return linalg.cholesky(mat, lower=True)
    except linalg.LinAlgError:
        pass

    try:
        return linalg.cholesky(mat + jitter * np.eye(mat.shape[0]), lower=True)
    except linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(
            f"matrix of shape {mat.shape} is not positive definite (jitter {jitter:g} did not help)"
        ) from e


def strict_cholesky(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor without jitter; used where genuine degeneracy must surface."""
    try:
        return linalg.cholesky(np.asarray(mat, dtype=float), lower=True)
    except linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"matrix of shape {np.shape(mat)} is singular or indefinite") from e


def logdet_from_cholesky(chol: np.ndarray) -> float:
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def solve_spd(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve mat @ X = rhs for a strictly positive definite mat."""
    factor = (strict_cholesky(mat), True)
    return linalg.cho_solve(factor, rhs)


def _checked_eigh(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = linalg.eigh(symmetrize(mat))
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    if vals.size and vals.min() < -1e-10 * scale:
        raise NotPositiveDefiniteError(f"matrix is not PSD (min eigenvalue {vals.min():.3e})")
    return np.maximum(vals, EIGEN_FLOOR), vecs


def psd_sqrtm(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition, eigenvalues floored at 1e-14."""
    vals, vecs = _checked_eigh(mat)
    return symmetrize((vecs * np.sqrt(vals)) @ vecs.T)


def psd_inv_sqrtm(mat: np.ndarray) -> np.ndarray:
    vals, vecs = _checked_eigh(mat)
    return symmetrize((vecs / np.sqrt(vals)) @ vecs.T)


def random_spd(rng: np.random.Generator, dim: int, min_eig: float = 0.5, max_eig: float = 2.0) -> np.ndarray:
    """Random SPD matrix with a Haar-distributed eigenbasis and eigenvalues in [min_eig, max_eig]."""
    q = random_orthogonal(rng, dim)
    eigs = rng.uniform(min_eig, max_eig, size=dim)
    return symmetrize((q * eigs) @ q.T)


def random_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Orthogonalize a standard Gaussian matrix; the sign fix makes the result Haar distributed."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def check_psd(mat: np.ndarray) -> None:
    """Raise NotPositiveDefiniteError when mat has a clearly negative eigenvalue."""
    _checked_eigh(mat)
