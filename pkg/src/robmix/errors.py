"""Exception types raised across the package."""


class RobmixError(Exception):
    """Base class for all library errors."""


class InvalidInputError(RobmixError, ValueError):
    """Input violates a precondition (non-finite values, bad shapes, bad weights)."""


class NumericalFailureError(RobmixError, ArithmeticError):
    """An iterative solver produced non-finite iterates."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateClusterError(RobmixError):
    """A mixture component lost too much mass to be estimated."""

    def __init__(self, message, cluster=None, weight=None):
        super().__init__(message)
        self.cluster = cluster
        self.weight = weight


class FitFailureError(RobmixError):
    """Every restart (or every K in a sweep) ended degenerate."""
