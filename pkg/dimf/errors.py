class DimfError(Exception):
    """Base class for every error raised by the dimf package."""


class DimensionMismatchError(DimfError, ValueError):
    """Two objects that must share a dimension do not."""


class NotPositiveDefiniteError(DimfError, ValueError):
    """A covariance failed factorization after one jitter retry, or is not PSD."""


class InvalidTimeGridError(DimfError, ValueError):
    """Time grid is not strictly increasing from 0 to 1 with N >= 1 inner points."""


class InvalidBlockError(DimfError, ValueError):
    """A block index is empty, overlapping or out of range."""


class MarginalMismatchError(DimfError, ValueError):
    """A coupling does not carry the required marginals."""


class AbsoluteContinuityError(DimfError, ValueError):
    """KL(p||q) is infinite: q puts zero mass where p does not."""


class InvalidEpsilonError(DimfError, ValueError):
    """Epsilon (bridge volatility or entropy weight) is not strictly positive."""


class UnderResolvedGridError(DimfError, ValueError):
    """A bridge kernel row is all zero; epsilon is too small for the grid spacing."""


class ConvergenceError(DimfError, RuntimeError):
    """An iterative solver did not reach its tolerance within max_iters."""


class ConfigError(DimfError, ValueError):
    """The experiment config file is missing, malformed or has unknown keys."""


class ToleranceFailure(DimfError):
    """An acceptance check exceeded its tolerance."""
