"""Exception hierarchy shared by every module of the package."""


class SubdiffError(Exception):
    """Base class for all errors raised by :mod:`subdiff`."""


class InvalidParameter(SubdiffError, ValueError):
    """An input violates a documented precondition."""


class ExponentOutOfRange(InvalidParameter):
    """A variable exponent leaves ``[0, alpha_sup]`` or ``alpha_sup >= 1``."""


class ConditionViolated(SubdiffError):
    """The selected exponent fails ``alpha(t_{n-kappa/2}) >= kappa``."""


class NewtonDiverged(SubdiffError):
    """The superconvergence fixed-point iteration did not converge."""


class IdentityViolation(SubdiffError):
    """Complementary kernels fail their defining identity."""


class UnsupportedConfiguration(InvalidParameter):
    """A valid but unsupported combination of options was requested."""


class NonConvergence(SubdiffError):
    """An iterative linear solve hit its iteration limit.

    The partial :class:`~subdiff.sparse.CGReport` is kept on ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StepFailure(SubdiffError):
    """Wraps a failure inside a time-stepping loop with its step context."""

    def __init__(self, message, step, cause=None):
        super().__init__(message)
        self.step = step
        self.cause = cause


class ConfigError(InvalidParameter):
    """A configuration file could not be parsed or validated."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
