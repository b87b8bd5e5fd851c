"""Exception hierarchy shared by all modules."""


class MessError(Exception):
    """Base class for every error raised by mess_shrink."""


class ValidationError(MessError, ValueError):
    """Invalid argument, malformed input file or violated invariant."""


class NumericalError(MessError, ArithmeticError):
    """A computation produced non-finite values or could not be completed."""


class FactorizationError(NumericalError):
    """Cholesky factorization failed even after jitter escalation."""


class CalibrationError(NumericalError):
    """SSVS scale calibration received a degenerate covariance estimate."""


class ChainAbortedError(NumericalError):
    """The MCMC state became non-finite; carries the sweep index."""

    def __init__(self, message, sweep=None):
        super().__init__(message)
        self.sweep = sweep
