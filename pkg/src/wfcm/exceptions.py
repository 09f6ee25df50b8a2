"""Exception hierarchy. Every error carries a short machine-readable code."""


class WfcmError(Exception):
    """Base class for all package errors.

    Parameters
    ----------
    code : str
        Short kebab-case identifier, e.g. ``"fit-diverged"``.
    message : str
        Human-readable description.
    """

    def __init__(self, code, message=None, **context):
        self.code = code
        self.context = context
        super().__init__(message or code)


class ValidationError(WfcmError):
    """Invalid inputs or configuration."""


class NumericalError(WfcmError):
    """A numerical procedure failed (divergence, non-finite values, ...)."""
