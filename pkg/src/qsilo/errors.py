"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid sizes, flags or parameter combinations."""


class InsufficientDataError(ValueError):
    """A statistical test was handed too few samples to be meaningful."""


class SizeError(ValueError):
    """A problem is too large for the requested solver."""


class NonConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
