"""Exception hierarchy shared across the package.

The CLI maps each family to a process exit code.
"""


class GadnrError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(GadnrError, ValueError):
    exit_code = 2


class DataError(GadnrError, ValueError):
    """Malformed input files or graph invariant violations."""

    exit_code = 3


class NumericError(GadnrError, ArithmeticError):
    """Non-finite values, failed factorizations, and similar numeric faults."""

    exit_code = 4
