"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific class that applies.
"""


class SpcLabError(Exception):
    """Base class for all package errors."""


class ValidationError(SpcLabError, ValueError):
    """Bad input data or configuration (CLI exit code 2)."""


class FitConvergenceError(SpcLabError, RuntimeError):
    """A fit failed to converge (CLI exit code 3).

    Carries optional diagnostics: ``last`` holds the last iterate when the
    failing routine can provide one, ``details`` a free-form dict.
    """

    def __init__(self, message, last=None, details=None):
        super().__init__(message)
        self.last = last
        self.details = details or {}


class DataFormatError(SpcLabError):
    """Malformed input file (CLI exit code 4)."""
