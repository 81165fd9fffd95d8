"""Exception hierarchy shared by all modules."""


class MinklocError(Exception):
    """Base class for errors raised by this package."""


class SchemaError(MinklocError, ValueError):
    """A set-spec or config document is malformed (missing/mistyped field)."""


class GeometryError(MinklocError, ValueError):
    """A document parses but describes an invalid geometric object."""


class ResourceError(MinklocError, RuntimeError):
    """A configured cap (cells, points, runtime) would be exceeded."""


class MarginError(MinklocError, ValueError):
    """A radius query would let the parallel set reach the window edge."""


class EstimationError(MinklocError, RuntimeError):
    """An estimator lacks the data it needs (short tail, no stabilization...)."""


class DataError(MinklocError, RuntimeError):
    """Input data violates a structural invariant (e.g. non-monotone volume)."""
