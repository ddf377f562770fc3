"""Exception types raised across the toolkit."""


class P3NetError(Exception):
    """Base class for all library errors."""


class FormatError(P3NetError):
    """A binary or manifest file failed validation."""


class NoObstacles(P3NetError):
    pass


class ShapeMismatch(P3NetError, ValueError):
    pass


class DimMismatch(ShapeMismatch):
    pass


class InvalidCache(P3NetError):
    """Fused batch-norm scale is stale with respect to its parameters."""


class NoForwardState(P3NetError):
    pass


class RangeOverflow(P3NetError, OverflowError):
    """A value does not fit in the requested fixed-point format."""

    def __init__(self, message, layer=None, parameter=None):
        super().__init__(message)
        self.layer = layer
        self.parameter = parameter


class EmptyDataset(P3NetError):
    pass


class InvalidEndpoint(P3NetError, ValueError):
    """Start or goal lies inside an obstacle."""


class GroundTruthFailed(P3NetError):
    pass


class TaskGenExhausted(P3NetError):
    pass
