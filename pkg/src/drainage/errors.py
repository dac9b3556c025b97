"""Exception types shared by the simulator modules."""


class DrainageError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(DrainageError, ValueError):
    pass


class SearchExhaustedError(DrainageError):
    """Successor search passed the configured radius cap."""

    def __init__(self, vertex, max_radius):
        super().__init__(f"no open forward vertex within radius {max_radius} of {tuple(vertex)}")
        self.vertex = tuple(vertex)
        self.max_radius = max_radius


class OracleWindowTooSmallError(DrainageError):
    pass


class BudgetExhaustedError(DrainageError):
    """Step or level budget ran out; ``partial`` carries whatever was collected."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial if partial is not None else []


class FitUndefinedError(DrainageError, ValueError):
    pass
