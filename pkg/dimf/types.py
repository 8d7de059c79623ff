from enum import Enum


class ExperimentMode(str, Enum):
    """Enum to represent the experiment modes the CLI can run."""
    GAUSS_CONVERGENCE = "gauss-convergence"  # Gaussian D-IMF sweep over (eps, N)
    GRID_CONVERGENCE = "grid-convergence"  # Exact D-IMF on a finite grid
    ORACLE_CHECK = "oracle-check"  # Closed form vs IPF vs grid Sinkhorn
    BRIDGE_CHECK = "bridge-check"  # Monte-Carlo and projection checks


class Direction(str, Enum):
    """Enum to represent the factorization direction of a Markov chain."""
    FORWARD = "forward"  # p0(x0) * prod q(x_tn | x_tn-1)
    BACKWARD = "backward"  # p1(x1) * prod q(x_tn-1 | x_tn)
