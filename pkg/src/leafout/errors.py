"""Exception types shared across the package."""


class LeafoutError(Exception):
    """Base class for all library errors."""


class DomainError(LeafoutError, ValueError):
    """An input lies outside the region where a model is defined."""


class SolverError(LeafoutError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IntegratorError(LeafoutError, RuntimeError):
    """A time integration became unreliable (e.g. energy balance violated)."""


class ConfigError(LeafoutError, ValueError):
    """A scenario configuration document is malformed or inconsistent."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
