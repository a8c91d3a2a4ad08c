"""Exception types shared across the package."""


class QndFilterError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(QndFilterError, ValueError):
    """Operands have incompatible shapes or an invalid dimension."""


class DomainError(QndFilterError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class StateCorruptionError(QndFilterError, ArithmeticError):
    """A density matrix left the physical set beyond repairable tolerance."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class BlowUpError(QndFilterError, ArithmeticError):
    """A trajectory produced non-finite values."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class SingularFamilyError(QndFilterError, ValueError):
    """The exponential family is degenerate at the requested point."""


class ConfigError(QndFilterError, ValueError):
    """An experiment configuration is malformed or inconsistent."""
