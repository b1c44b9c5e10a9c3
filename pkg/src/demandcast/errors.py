"""Exception hierarchy shared by the pipeline stages."""


class DemandCastError(Exception):
    """Base class for all package errors."""


class InputError(DemandCastError, ValueError):
    """Bad input data or configuration. The CLI maps this to exit code 1."""


class InvariantViolation(DemandCastError, AssertionError):
    """An internal consistency check failed. The CLI maps this to exit code 2."""
