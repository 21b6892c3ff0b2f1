"""Exception hierarchy shared by the control stack."""


class FappError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateThrust(FappError):
    """Commanded specific thrust is too small to define a body attitude."""


class TiltLimit(FappError):
    """The required attitude tilts the thrust axis to or beyond horizontal."""


class DomainError(FappError, ValueError):
    """A path parameter lies outside the curve's parameter interval."""


class DegeneratePath(FappError, ValueError):
    """The path is not regular (vanishing tangent) or has coincident endpoints."""


class QpInfeasible(FappError):
    """The condensed QP could not be solved to a certified optimum."""


class DimensionMismatch(FappError, ValueError):
    """QP data arrays have inconsistent shapes."""


class NumericalBreakdown(FappError):
    """A factorization failed inside the QP solver."""


class NonFiniteState(FappError):
    """The simulator produced a NaN or infinite state component."""


class ConfigError(FappError, ValueError):
    """An experiment configuration is malformed or inconsistent."""


class MissingEpisode(FappError):
    """A comparison was requested against an episode that has no results."""
