"""Exception types raised across the package."""


class DdmpcError(Exception):
    """Base class for all package errors."""


class InvalidDepthError(DdmpcError, ValueError):
    """Hankel depth outside ``1 <= L <= T``."""


class InsufficientDataError(DdmpcError, ValueError):
    """Signal too short for the requested window or order."""


class DimensionError(DdmpcError, ValueError):
    """Array shapes disagree with the declared dimensions."""


class NumericError(DdmpcError, ValueError):
    """Non-finite values where finite ones are required."""


class DegenerateDataError(DdmpcError, ValueError):
    """Data matrix carries no usable information (all zero or singular)."""


class InfeasibleError(DdmpcError, ValueError):
    """Constraint set is empty."""


class SelectionFailedError(DdmpcError, RuntimeError):
    """Every dataset in a bank failed to score."""


class DivergenceError(DdmpcError, RuntimeError):
    """A simulation or training run blew up.

    Attributes:
        epoch: Training epoch at which divergence was detected, if any.
    """

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class InputBoundError(DdmpcError, ValueError):
    """Commanded input outside the plant's admissible range."""


class InvalidDurationError(DdmpcError, ValueError):
    """Non-positive segment duration."""


class ReferenceInfeasibleError(DdmpcError, ValueError):
    """Reference cannot be produced inside the trained model range."""


class EpisodeAbortedError(DdmpcError, RuntimeError):
    """Open-loop recording stopped early.

    Attributes:
        partial: Trajectory holding the samples recorded before the failure
            (``None`` if no sample was recorded).
        step: Index of the step that failed.
    """

    def __init__(self, message, partial=None, step=None):
        super().__init__(message)
        self.partial = partial
        self.step = step
