"""Exception hierarchy shared across the package.

Validation failures (bad input files, contract violations) and numerical
failures (non-convergence, singular systems) are kept distinct so the CLI
can map them to different exit codes.
"""


class HospcastError(Exception):
    """Base class for all package errors."""


class ValidationError(HospcastError):
    """Raised when inputs violate a documented contract (exit code 2)."""


class NumericalError(HospcastError):
    """Raised when a fit fails numerically (exit code 3)."""
