"""Exception hierarchy shared across the toolkit.

Two broad families matter to callers (and to the CLI's exit codes):
``InputError`` for invalid inputs, parameters, or configuration, and
``NumericError`` for computations that fail or refuse to proceed on
otherwise valid inputs (infeasible constraints, divergence, truncation).
"""


class SymtailError(Exception):
    """Base class for all toolkit errors."""


class InputError(SymtailError, ValueError):
    """Invalid argument, precondition violation, or malformed input/config."""


class NumericError(SymtailError, RuntimeError):
    """A numeric procedure failed or its result cannot be trusted."""


class InvalidTailIndexError(InputError):
    """Degrees of freedom outside the finite-variance range (requires nu > 2)."""


class NonFiniteInputError(InputError):
    """An input value was NaN or infinite where a finite real is required."""


class InfiniteVarianceError(InputError):
    """Scaled tail law has no finite variance (requires tail exponent > 3/2)."""


class DegenerateDimensionError(InputError):
    """A symbol dimension is constant where spread is required."""


class InsufficientSamplesError(InputError):
    """Too few samples for the requested estimate."""


class AllZeroBatchError(InputError):
    """Power normalization is undefined for an all-zero batch."""


class InfeasibleConstraintError(NumericError):
    """The requested constraint cannot be met within the solver's bracket."""


class GridTruncationError(NumericError):
    """Probability mass beyond the grid edge exceeds tolerance."""


class QuadratureError(NumericError):
    """Adaptive quadrature did not reach the requested tolerance."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""
