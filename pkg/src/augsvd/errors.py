"""Exception types raised by the package."""


class AugSVDError(Exception):
    """Base class for all package errors."""


class DimensionError(AugSVDError, ValueError):
    """Shapes of the inputs do not fit together."""


class CapacityError(DimensionError):
    """Augmenting would produce more columns than rows."""


class NonFiniteError(AugSVDError, ValueError):
    """Input data contains NaN or infinite entries."""


class ConvergenceError(AugSVDError, ArithmeticError):
    """The small dense SVD failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StateFormatError(AugSVDError, ValueError):
    """A serialized state is corrupted, truncated or of the wrong version."""


class VersionError(StateFormatError):
    """Magic bytes or format version do not match."""


class SamplerError(AugSVDError, RuntimeError):
    """The sample accessor failed for a given multi-index."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class StabilizationError(AugSVDError, RuntimeError):
    """Rank did not stabilize before the maximal degree."""

    def __init__(self, message, trajectory):
        super().__init__(message)
        self.trajectory = list(trajectory)
