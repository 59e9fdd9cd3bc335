"""Exception hierarchy shared by all modules."""


class MtfragError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(MtfragError, ValueError):
    """Invalid model or argument (bad shape, sign, reducibility, ...)."""


class NumericError(MtfragError, ArithmeticError):
    """A numerical routine failed to converge or overflowed."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DomainError(MtfragError, ValueError):
    """Argument lies outside the region where a closed form is valid."""

    def __init__(self, message, abscissa=None):
        super().__init__(message)
        self.abscissa = abscissa


class TruncationError(MtfragError):
    """An infinite-horizon quantity could not be truncated within tolerance."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class DataError(MtfragError, ValueError):
    """Inconsistent simulation output handed to a consumer."""


class ConfigError(MtfragError, ValueError):
    """Configuration document failed validation."""
