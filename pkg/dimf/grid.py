"""
Exact D-IMF on a finite state space.

Every process is handled through its endpoint form: a coupling over
(x0, x1) plus, for each inner slice n = 1..N, a kernel [x_prev, x1, x_next]
giving the next slice from the previous one and the endpoint. The last
step is x_{N+1} = x1. Reciprocal processes are born in this form; Markov
chains reach it through their h-transform. Path tensors of size S^(N+2)
are only materialized for enumeration on small instances.
"""
import logging
import string
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from dimf.bridge import TimeGrid
from dimf.errors import (
    AbsoluteContinuityError,
    DimensionMismatchError,
    InvalidEpsilonError,
    MarginalMismatchError,
    UnderResolvedGridError,
)
from dimf.trace import ConvergenceTrace
from dimf.types import Direction

logger = logging.getLogger(__name__)

ROW_TOL = 1e-12
ENUMERATION_LIMIT = 10 ** 6


@dataclass(frozen=True, eq=False)
class GridSpace:
    """S distinct points in R^d, d in {1, 2}."""
    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[0] < 2:
            raise DimensionMismatchError(f"grid needs at least 2 points, got {points.shape[0]}")
        if points.shape[1] not in (1, 2):
            raise DimensionMismatchError(f"grid dimension must be 1 or 2, got {points.shape[1]}")
        if np.unique(points, axis=0).shape[0] != points.shape[0]:
            raise DimensionMismatchError("grid points must be distinct")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @classmethod
    def uniform(cls, low: float, high: float, points: int, d: int = 1) -> "GridSpace":
        """points per axis on [low, high]; d = 2 builds the tensor-product grid."""
        axis = np.linspace(low, high, points)
        if d == 1:
            return cls(axis[:, None])
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        return cls(np.stack([xx.ravel(), yy.ravel()], axis=1))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def sq_distances(self) -> np.ndarray:
        diff = self.points[:, None, :] - self.points[None, :, :]
        return np.sum(diff * diff, axis=-1)


@dataclass(frozen=True, eq=False)
class GridCoupling:
    """S x S probability matrix over (x0, x1)."""
    pi: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
            raise DimensionMismatchError(f"coupling must be square, got {pi.shape}")
        if np.any(pi < 0):
            raise MarginalMismatchError("coupling has negative entries")
        if abs(pi.sum() - 1.0) > ROW_TOL:
            raise MarginalMismatchError(f"coupling sums to {pi.sum():.15f}")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @classmethod
    def independent(cls, p0: np.ndarray, p1: np.ndarray) -> "GridCoupling":
        return cls(np.outer(p0, p1))

    @property
    def p0(self) -> np.ndarray:
        return self.pi.sum(axis=1)

    @property
    def p1(self) -> np.ndarray:
        return self.pi.sum(axis=0)

    def check_marginals(self, p0: np.ndarray, p1: np.ndarray, tol: float) -> None:
        gap = max(np.max(np.abs(self.p0 - p0)), np.max(np.abs(self.p1 - p1)))
        if gap > tol:
            raise MarginalMismatchError(f"coupling marginals miss (p0, p1) by {gap:.3e} (tolerance {tol:g})")


@dataclass(frozen=True, eq=False)
class GridBridgeKernels:
    """
    Bridges of the grid-discretized Brownian reference.

    kernels[n - 1][x, x1, y] is the probability of x_{t_n} = y given
    x_{t_{n-1}} = x and x_1 = x1; log_static_kernel is ln W_0, the
    reference's (x0, x1) kernel.
    """
    space: GridSpace
    grid: TimeGrid
    epsilon: float
    kernels: np.ndarray
    log_static_kernel: np.ndarray


@dataclass(frozen=True, eq=False)
class EndpointForm:
    coupling: np.ndarray
    kernels: np.ndarray

    @property
    def size(self) -> int:
        return self.coupling.shape[0]

    @property
    def n_inner(self) -> int:
        return self.kernels.shape[0]


def _log_matmul(log_a: np.ndarray, log_b: np.ndarray) -> np.ndarray:
    return logsumexp(log_a[:, :, None] + log_b[None, :, :], axis=1)


def build_bridge_kernels(space: GridSpace, grid: TimeGrid, epsilon: float) -> GridBridgeKernels:
    """
    Grid bridge kernels B_n[x, x1, y] = Q_n(x, y) W_n(y, x1) / W_{n-1}(x, x1).

    Q_n(x, y) = exp(-||y - x||^2 / (2 eps (t_n - t_{n-1}))) and W_n = Q_{n+1} ... Q_{N+1},
    all in the log domain. For the last inner step this is exactly the
    grid-renormalized Brownian bridge density.

    Args:
        space: Grid of states
        grid: Time grid
        epsilon: Bridge volatility

    Returns:
        GridBridgeKernels with row-stochastic kernels of shape (N, S, S, S)
    """
    if not epsilon > 0.0:
        raise InvalidEpsilonError(f"epsilon must be > 0, got {epsilon}")

    sq = space.sq_distances()
    log_q = [-sq / (2.0 * epsilon * dt) for dt in np.diff(grid.times)]
    n_inner = grid.n_inner

    # log_w[n] = ln W_n for n = 0..N
    log_w: list[np.ndarray] = [np.empty(0)] * (n_inner + 1)
    log_w[n_inner] = log_q[n_inner]
    for n in range(n_inner, 0, -1):
        log_w[n - 1] = _log_matmul(log_q[n - 1], log_w[n])

    kernels = np.empty((n_inner, space.size, space.size, space.size))
    collapsed = 0
    for n in range(1, n_inner + 1):
        log_kernel = log_q[n - 1][:, None, :] + log_w[n].T[None, :, :] - log_w[n - 1][:, :, None]
        with np.errstate(over="ignore", invalid="ignore"):
            kernel = np.exp(log_kernel)
        sums = kernel.sum(axis=-1)

        if np.any(~np.isfinite(sums)) or np.any(sums == 0.0):
            raise UnderResolvedGridError(
                f"bridge kernel for interval {n} has all-zero rows; epsilon={epsilon:g} is too small "
                f"for this grid spacing"
            )
        kernel /= sums[..., None]
        collapsed += int(np.sum(kernel.max(axis=-1) > 1.0 - ROW_TOL))
        kernels[n - 1] = kernel

    if collapsed:
        logger.warning(
            "%d bridge kernel rows put all mass on one grid point; the grid under-resolves eps=%g",
            collapsed, epsilon,
        )

    return GridBridgeKernels(
        space=space,
        grid=grid,
        epsilon=float(epsilon),
        kernels=kernels,
        log_static_kernel=log_w[0],
    )


class PathLawMixin:
    """Path-space computations shared by both grid process forms."""

    def endpoint_form(self) -> EndpointForm:
        raise NotImplementedError

    def endpoint_messages(self, form: EndpointForm | None = None) -> list[np.ndarray]:
        """msg[n][x1, x] = P(x_{t_n} = x, x_1 = x1) for n = 0..N."""
        form = form if form is not None else self.endpoint_form()
        messages = [form.coupling.T]
        for kernel in form.kernels:
            messages.append(np.einsum("ax,xay->ay", messages[-1], kernel))
        return messages

    def pairwise_marginals(self) -> list[np.ndarray]:
        """P(x_{t_{n-1}}, x_{t_n}) for n = 1..N+1."""
        form = self.endpoint_form()
        messages = self.endpoint_messages(form)
        pairs = [np.einsum("ax,xay->xy", messages[n], form.kernels[n]) for n in range(form.n_inner)]
        pairs.append(messages[-1].T)
        return pairs

    def time_marginals(self) -> list[np.ndarray]:
        pairs = self.pairwise_marginals()
        return [pairs[0].sum(axis=1)] + [pair.sum(axis=0) for pair in pairs]

    def path_probabilities(self) -> np.ndarray:
        """Full path tensor, axes in chronological order (x0, x_t1, ..., x_tN, x1)."""
        form = self.endpoint_form()
        n_inner = form.n_inner
        if form.size ** (n_inner + 2) > ENUMERATION_LIMIT:
            raise MemoryError(f"refusing to enumerate {form.size}^{n_inner + 2} paths")

        letters = string.ascii_letters
        # axis labels: x0 -> a, x1 -> b, inner n -> letters[n + 1]
        tensor = form.coupling
        current = "ab"
        for n in range(1, n_inner + 1):
            prev = "a" if n == 1 else letters[n]
            new = letters[n + 1]
            tensor = np.einsum(f"{current},{prev}b{new}->{current}{new}", tensor, form.kernels[n - 1])
            current += new
        order = [0] + list(range(2, n_inner + 2)) + [1]
        return np.transpose(tensor, order)


@dataclass(frozen=True, eq=False)
class GridReciprocalProcess(PathLawMixin):
    """Coupling times grid bridges; the output of the reciprocal projection."""
    coupling: GridCoupling
    bridges: GridBridgeKernels

    def endpoint_form(self) -> EndpointForm:
        return EndpointForm(self.coupling.pi, self.bridges.kernels)


def _check_stochastic(mat: np.ndarray, label: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatchError(f"{label} must be square, got {mat.shape}")
    if np.any(mat < 0) or np.max(np.abs(mat.sum(axis=1) - 1.0)) > ROW_TOL:
        raise MarginalMismatchError(f"{label} is not row-stochastic")
    return mat


@dataclass(frozen=True, eq=False)
class GridMarkovChain(PathLawMixin):
    """
    Markov chain over N + 2 slices.

    Forward: `marginal` is the law of x0 and transitions[n - 1] = q(x_tn | x_tn-1).
    Backward: `marginal` is the law of x1 and transitions[n - 1] = q(x_tn-1 | x_tn).
    """
    marginal: np.ndarray
    transitions: tuple[np.ndarray, ...]
    direction: Direction = Direction.FORWARD

    def __post_init__(self):
        marginal = np.asarray(self.marginal, dtype=float)
        if np.any(marginal < 0) or abs(marginal.sum() - 1.0) > ROW_TOL:
            raise MarginalMismatchError("chain marginal is not a pmf")
        transitions = tuple(_check_stochastic(t, f"transition {n}") for n, t in enumerate(self.transitions, start=1))
        if any(t.shape[0] != marginal.size for t in transitions):
            raise DimensionMismatchError("transition sizes do not match the marginal")
        object.__setattr__(self, "marginal", marginal)
        object.__setattr__(self, "transitions", transitions)

    @property
    def n_inner(self) -> int:
        return len(self.transitions) - 1

    def to_forward(self) -> "GridMarkovChain":
        """Same path law, factorized from x0."""
        if self.direction == Direction.FORWARD:
            return self

        # marginals from x1 backwards, then pairwise P(x_{n-1}, x_n) = P(x_n) R_n[x_n, x_{n-1}]
        current = self.marginal
        pairs = []
        for reverse in reversed(self.transitions):
            pair = (current[:, None] * reverse).T
            pairs.append(pair)
            current = pair.sum(axis=1)
        pairs.reverse()

        forward = tuple(_normalize_rows(pair, "forward transition") for pair in pairs)
        return GridMarkovChain(marginal=current, transitions=forward, direction=Direction.FORWARD)

    def coupling(self) -> GridCoupling:
        """(x0, x1) law: diag(p0) T_1 ... T_{N+1}, or its backward analogue."""
        product = np.eye(self.marginal.size)
        if self.direction == Direction.FORWARD:
            for transition in self.transitions:
                product = product @ transition
            return GridCoupling(self.marginal[:, None] * product)

        for transition in reversed(self.transitions):
            product = product @ transition
        return GridCoupling((self.marginal[:, None] * product).T)

    def endpoint_form(self) -> EndpointForm:
        chain = self.to_forward()
        size = chain.marginal.size
        n_inner = chain.n_inner

        # h[n][x, x1] = P(x1 | x_tn = x) = T_{n+1} ... T_{N+1}
        h: list[np.ndarray] = [np.empty(0)] * (n_inner + 1)
        h[n_inner] = chain.transitions[n_inner]
        for n in range(n_inner - 1, -1, -1):
            h[n] = chain.transitions[n] @ h[n + 1]

        kernels = np.empty((n_inner, size, size, size))
        for n in range(1, n_inner + 1):
            numer = chain.transitions[n - 1][:, None, :] * h[n].T[None, :, :]
            denom = h[n - 1][:, :, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                kernel = np.where(denom > 0, numer / denom, 1.0 / size)
            kernels[n - 1] = kernel

        return EndpointForm(chain.marginal[:, None] * h[0], kernels)


def _normalize_rows(mat: np.ndarray, label: str) -> np.ndarray:
    """Row-normalize; zero-mass rows become uniform with a warning."""
    sums = mat.sum(axis=1)
    empty = sums <= 0.0
    out = np.empty_like(mat, dtype=float)
    out[~empty] = mat[~empty] / sums[~empty, None]
    if np.any(empty):
        logger.warning("%s: %d zero-mass rows set to uniform", label, int(empty.sum()))
        out[empty] = 1.0 / mat.shape[1]
    return out


def grid_reciprocal_projection(coupling: GridCoupling, kernels: GridBridgeKernels) -> GridReciprocalProcess:
    if coupling.pi.shape[0] != kernels.space.size:
        raise DimensionMismatchError(f"coupling is {coupling.pi.shape}, grid has {kernels.space.size} points")
    return GridReciprocalProcess(coupling=coupling, bridges=kernels)


def grid_markovian_projection(proc: PathLawMixin, direction: Direction = Direction.FORWARD) -> GridMarkovChain:
    """
    Markov chain with the same consecutive-pair marginals as proc.

    Args:
        proc: Reciprocal process or Markov chain
        direction: Factorize from x0 (forward) or from x1 (backward)

    Returns:
        GridMarkovChain in the requested direction
    """
    pairs = proc.pairwise_marginals()
    if direction == Direction.FORWARD:
        transitions = tuple(_normalize_rows(pair, "forward transition") for pair in pairs)
        return GridMarkovChain(marginal=pairs[0].sum(axis=1), transitions=transitions, direction=direction)

    transitions = tuple(_normalize_rows(pair.T, "backward transition") for pair in pairs)
    return GridMarkovChain(marginal=pairs[-1].sum(axis=0), transitions=transitions, direction=direction)


def _kl_terms(p: np.ndarray, q: np.ndarray, weight: np.ndarray | None = None) -> float:
    """sum weight * p * ln(p / q) over p > 0; weight defaults to 1."""
    mass = p if weight is None else weight * p
    support = mass > 0
    if np.any(q[support] <= 0):
        raise AbsoluteContinuityError("q has zero mass where p is positive")
    return float(np.sum(mass[support] * (np.log(p[support]) - np.log(q[support]))))


def _check_compatible(p: EndpointForm, q: EndpointForm) -> None:
    if p.coupling.shape != q.coupling.shape or p.kernels.shape != q.kernels.shape:
        raise DimensionMismatchError("processes live on different grids or time grids")


def grid_kl_enumerate(p: PathLawMixin, q: PathLawMixin) -> float:
    """Path-space KL by explicit enumeration of every path."""
    _check_compatible(p.endpoint_form(), q.endpoint_form())
    return _kl_terms(p.path_probabilities(), q.path_probabilities())


def grid_kl_chain_rule(p: PathLawMixin, q: PathLawMixin) -> float:
    """Path-space KL as the (x0, x1) term plus expected per-step kernel KLs."""
    form_p = p.endpoint_form()
    form_q = q.endpoint_form()
    _check_compatible(form_p, form_q)

    kl = _kl_terms(form_p.coupling, form_q.coupling)
    message = form_p.coupling.T
    for kernel_p, kernel_q in zip(form_p.kernels, form_q.kernels):
        kl += _kl_terms(kernel_p, kernel_q, weight=message.T[:, :, None])
        message = np.einsum("ax,xay->ay", message, kernel_p)
    return kl


def grid_kl_factored(p: PathLawMixin, q: PathLawMixin) -> float:
    """Path-space KL in nats; enumerates up to 10^6 paths, chain rule beyond."""
    form = p.endpoint_form()
    if form.size ** (form.n_inner + 2) <= ENUMERATION_LIMIT:
        return grid_kl_enumerate(p, q)
    return grid_kl_chain_rule(p, q)


def coupling_kl(p: GridCoupling, q: GridCoupling) -> float:
    return _kl_terms(p.pi, q.pi)


def total_variation(p: GridCoupling, q: GridCoupling) -> float:
    return 0.5 * float(np.sum(np.abs(p.pi - q.pi)))


def discretized_gaussian(space: GridSpace, mean: float | np.ndarray, std: float) -> np.ndarray:
    """pmf proportional to the Gaussian density at the grid points."""
    diff = space.points - np.broadcast_to(np.asarray(mean, dtype=float), (space.d,))
    log_w = -np.sum(diff * diff, axis=1) / (2.0 * std ** 2)
    w = np.exp(log_w - log_w.max())
    return w / w.sum()


def grid_sb_process(p0: np.ndarray, p1: np.ndarray, kernels: GridBridgeKernels, tol: float = 1e-12) -> GridReciprocalProcess:
    """Static SB for the reference's own kernel, completed with its bridges."""
    from dimf.oracle import grid_sinkhorn

    plan = grid_sinkhorn(p0, p1, kernels.space, kernels.epsilon, tol=tol, log_kernel=kernels.log_static_kernel)
    return GridReciprocalProcess(coupling=plan, bridges=kernels)


def random_grid_coupling(rng: np.random.Generator, size: int) -> GridCoupling:
    pi = rng.dirichlet(np.ones(size * size)).reshape(size, size)
    return GridCoupling(pi / pi.sum())


def random_grid_chain(rng: np.random.Generator, size: int, n_inner: int) -> GridMarkovChain:
    """Forward chain with full support: Dirichlet initial law and transition rows."""
    initial = rng.dirichlet(np.ones(size))
    transitions = tuple(rng.dirichlet(np.ones(size), size=size) for _ in range(n_inner + 1))
    return GridMarkovChain(marginal=initial, transitions=transitions)


@dataclass(frozen=True, eq=False)
class GridDimfOptions:
    oracle: GridCoupling | None = None
    max_iters: int = 500
    tol: float = 1e-10
    record_wall_time: bool = True
    kernels: GridBridgeKernels | None = None


def grid_dimf_run(
    p0: np.ndarray,
    p1: np.ndarray,
    init: GridCoupling,
    space: GridSpace,
    grid: TimeGrid,
    epsilon: float,
    opts: GridDimfOptions | None = None,
) -> tuple[GridCoupling, ConvergenceTrace]:
    """
    Outer D-IMF iterations on the grid.

    Each outer iteration runs reciprocal projection, forward Markovian
    projection, reciprocal projection and backward Markovian projection.

    Args:
        p0: Law of x0
        p1: Law of x1
        init: Starting coupling with marginals (p0, p1)
        space: State grid
        grid: Time grid
        epsilon: Bridge volatility
        opts: Oracle (defaults to Sinkhorn on the reference kernel), caps and tolerances

    Returns:
        (final coupling, trace) with one record per outer iteration
    """
    opts = opts or GridDimfOptions()
    init.check_marginals(p0, p1, 1e-10)

    kernels = opts.kernels or build_bridge_kernels(space, grid, epsilon)
    oracle = opts.oracle or grid_sb_process(p0, p1, kernels).coupling
    if oracle.pi.shape != init.pi.shape:
        raise DimensionMismatchError(f"oracle is {oracle.pi.shape}, coupling is {init.pi.shape}")

    coupling = init
    trace = ConvergenceTrace(initial_kl=coupling_kl(init, oracle))
    tv = total_variation(init, oracle)
    for _ in range(opts.max_iters):
        started = time.perf_counter()
        forward = grid_markovian_projection(grid_reciprocal_projection(coupling, kernels), Direction.FORWARD)
        backward = grid_markovian_projection(
            grid_reciprocal_projection(forward.coupling(), kernels), Direction.BACKWARD
        )
        updated = backward.coupling()
        wall_ms = (time.perf_counter() - started) * 1e3 if opts.record_wall_time else 0.0

        tv = total_variation(updated, oracle)
        trace.append(
            kl_to_oracle=coupling_kl(updated, oracle),
            kl_step=coupling_kl(updated, coupling),
            wall_ms=wall_ms,
            tv_to_oracle=tv,
        )
        coupling = updated
        if tv < opts.tol:
            break
    else:
        logger.warning("grid D-IMF stopped at %d outer iterations with TV %.3e", opts.max_iters, tv)

    return coupling, trace
