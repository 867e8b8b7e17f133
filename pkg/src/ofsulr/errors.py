"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class OfsulrError(Exception):
    exit_code = 1


class UsageError(OfsulrError):
    """Bad configuration, flags or arguments."""

    exit_code = 1


class DataError(OfsulrError):
    """Unreadable, malformed or inconsistent input data."""

    exit_code = 2


class NumericalError(OfsulrError):
    """A numerical routine failed (non-convergence, non-finite values, ...)."""

    exit_code = 3
