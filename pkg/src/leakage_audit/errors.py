"""Exception hierarchy shared across the toolkit.

DataError maps to CLI exit code 3, I/O problems (plain OSError) to 4.
"""


class AuditError(Exception):
    """Base class for all toolkit errors."""


class FormatError(AuditError):
    """A file does not conform to its on-disk format."""


class ValidationError(AuditError):
    """Inputs are well-formed but violate a contract or invariant."""
