"""Exception types shared across the package."""


class ApubError(Exception):
    """Base class for errors raised by this package."""


class NumericalBreakdown(ApubError):
    """The simplex lost a usable basis (ill-conditioned input)."""


class EnumerationTooLarge(ApubError):
    """Exact multinomial enumeration requested beyond the size cap."""


class ModelError(ApubError):
    """The two-stage model violates a well-posedness assumption."""


class ModelInfeasible(ModelError):
    """Feasibility cuts (or the first stage) prove the feasible set empty."""


class ModelUnbounded(ModelError):
    """The master or a recourse problem is unbounded below."""


class IterationCapExceeded(ApubError):
    """The L-shaped loop hit its iteration cap; finite termination says this is a bug."""
