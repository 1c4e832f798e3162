"""Exception types shared across the package.

The CLI maps these onto exit codes, so library code should raise the most
specific one that applies rather than a bare ValueError.
"""


class FermildpError(Exception):
    """Base class for all package errors."""


class ConfigError(FermildpError):
    """Invalid configuration (unknown tag, bad schema, inconsistent sizes)."""


class DomainError(FermildpError):
    """Inputs outside an operation's domain (site off box, overlapping cells)."""


class AccuracyError(FermildpError):
    """A quadrature or integrator failed its self-consistency check."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class SingularityError(FermildpError):
    """A matrix was singular to working precision."""

    def __init__(self, message, smallest_pivot=None):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


class ResourceError(FermildpError):
    """A configured resource cap (matrix size, mode count) was exceeded."""
