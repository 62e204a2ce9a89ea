"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class ParseError(ValueError):
    """A serialized document is malformed.

    ``field`` names the offending field when it is known.
    """

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class ConfigError(ValueError):
    """An environment or run configuration is unusable."""


class InvalidActionError(ValueError):
    """An action refers to a cell outside the grid."""


class ResourceLimitError(RuntimeError):
    """State enumeration grew beyond the configured cap."""

    def __init__(self, cap):
        super().__init__(f"reachable state count exceeded cap of {cap}")
        self.cap = cap


class ConvergenceError(RuntimeError):
    """Value iteration hit ``max_iters`` before reaching the tolerance."""

    def __init__(self, iterations, residual):
        super().__init__(
            f"value iteration did not converge after {iterations} sweeps "
            f"(residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual
