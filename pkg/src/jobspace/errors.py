"""Error types shared across the package.

The CLI maps these onto its exit-code contract: usage errors exit 1,
data errors exit 2, numerical failures exit 3.
"""


class JobspaceError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class UsageError(JobspaceError):
    """Invalid flags, parameters, or call configuration."""

    exit_code = 1


class DataError(JobspaceError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class UnresolvableSkillsError(DataError):
    """A posting has no skills and no curated fallback entry."""


class NumericalError(JobspaceError):
    """Training or numeric computation produced non-finite values."""

    exit_code = 3
