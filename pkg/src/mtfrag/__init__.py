"""Matrix-analytic tools and exact simulation for multi-type Markov additive
processes and the self-similar fragmentations they drive."""

__version__ = "0.1.0"

from .errors import (
    MtfragError,
    ParameterError,
    NumericError,
    DomainError,
    TruncationError,
    DataError,
    ConfigError,
)

__all__ = [
    "__version__",
    "MtfragError",
    "ParameterError",
    "NumericError",
    "DomainError",
    "TruncationError",
    "DataError",
    "ConfigError",
]
