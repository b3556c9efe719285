"""Error taxonomy shared across the package.

All are ValueError subclasses so callers that only care about "bad input"
can catch one base class, while tests can assert the precise kind.
"""


class DimensionError(ValueError):
    """Array extents are missing, mismatched, or otherwise unusable."""


class DomainError(ValueError):
    """A value lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A config object or file is inconsistent or contains unknown keys."""


class FormatError(ValueError):
    """A binary or text artifact does not match its declared format."""


class ContractError(ValueError):
    """An internal usage contract was violated by the caller."""
