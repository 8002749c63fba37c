"""Exception hierarchy shared by all modules."""


class EllipflowError(Exception):
    """Base class for every error raised by this package."""


class DomainError(EllipflowError, ValueError):
    """A state or argument lies outside the domain of a formula (e.g. some a_i <= 0)."""


class RangeError(EllipflowError, ValueError):
    """A time lies outside the span covered by a trajectory."""


class ValidationError(EllipflowError, ValueError):
    """A parameter set violates a documented invariant."""


class SchemaError(EllipflowError, ValueError):
    """A configuration document does not match the schema.

    ``path`` is the JSON path of the offending field, ``reason`` the message.
    """

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class SupportBoundaryError(EllipflowError, ValueError):
    """A residual sample is too close to (or beyond) the edge of the profile's domain."""


class InfiniteMassError(EllipflowError, ArithmeticError):
    """The density profile is not integrable over R^N."""


class BlowupDuringLyapunov(EllipflowError, RuntimeError):
    """The base trajectory terminated before the Lyapunov window was covered."""
