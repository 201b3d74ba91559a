"""Exception types shared across the package.

The CLI maps :class:`InputError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""


class QawaError(Exception):
    """Base class for package errors."""


class InputError(QawaError, ValueError):
    """Invalid user input: bad shapes, out-of-range parameters, malformed files."""


class NumericalError(QawaError, RuntimeError):
    """A numerical procedure failed (divergence, impossible branch, ...)."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
