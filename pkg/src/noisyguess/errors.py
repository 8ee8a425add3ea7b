"""Exception types shared across the package."""


class NoisyGuessError(Exception):
    """Base class for all package errors."""


class InvalidDistributionError(NoisyGuessError, ValueError):
    """A probability vector or channel row failed validation."""


class DimensionMismatchError(NoisyGuessError, ValueError):
    pass


class ResourceLimitError(NoisyGuessError):
    """An enumeration would exceed its configured cap."""


class UnreachableError(NoisyGuessError):
    """Some source symbol with positive probability can never be produced by the channel."""


class NonConvergenceError(NoisyGuessError):
    def __init__(self, message, iterations=None, gap=None):
        super().__init__(message)
        self.iterations = iterations
        self.gap = gap


class InfiniteMomentError(NoisyGuessError):
    """The guessing moment diverges (a target with zero per-guess hit probability)."""


class HorizonTooSmallError(NoisyGuessError):
    pass
