"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class PreconditionError(ValueError):
    """A documented precondition of an operation does not hold."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or to bracket a root."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CapabilityError(ValueError):
    """The request exceeds what the exhaustive enumerator supports (n > 30)."""
