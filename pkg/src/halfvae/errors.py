"""Exception hierarchy shared by every module.

Each class maps onto one CLI exit code, see :mod:`halfvae.cli`.
"""


class HalfVaeError(Exception):
    """Base class for all package errors."""


class ShapeError(HalfVaeError, ValueError):
    """Array dimensions do not chain or match."""


class DomainError(HalfVaeError, ValueError):
    """Argument outside the mathematical domain (e.g. a non-positive variance)."""


class NumericError(HalfVaeError, ArithmeticError):
    """A NaN or Inf showed up where a finite number was required."""


class ConfigError(HalfVaeError, ValueError):
    """Invalid experiment configuration or mismatched input files."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field

    def __reduce__(self):
        return (type(self), (str(self), self.field))


class UnderdeterminedError(ConfigError):
    """Fewer observed channels than sources (M < N) is not supported."""

    def __init__(self, m, n):
        self.m, self.n = m, n
        super().__init__(
            f"underdetermined problem: m={m} observed channels < n={n} sources "
            "(no inverse mapping exists, m >= n is required)",
            field="m",
        )

    def __reduce__(self):
        return (type(self), (self.m, self.n))


class DegenerateInputError(HalfVaeError, ValueError):
    """Constant series where a non-zero spread is required."""


class SizeLimitError(HalfVaeError, ValueError):
    """Problem too large for an exhaustive search."""


class PipelineIOError(HalfVaeError, OSError):
    """A pipeline input is missing or unreadable, or an output cannot be written."""
