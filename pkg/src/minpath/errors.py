"""Exception types shared across the package."""


class MinPathError(Exception):
    """Base class for all library errors."""


class SelfIntersecting(MinPathError):
    """A curve required to be simple crosses itself."""


class DegenerateCurve(MinPathError):
    """A curve is too short or has too few points for the operation."""


class DegenerateRegion(MinPathError):
    """A region mask is empty where a nonempty one is required."""


class NotPositiveDefinite(MinPathError):
    """A metric fails the positive-definiteness bound.

    Carries the worst grid node and the offending value.
    """

    def __init__(self, message, node=None, value=None):
        super().__init__(message)
        self.node = node
        self.value = value


class NonFiniteMetric(MinPathError):
    """A metric field contains NaN or infinite entries."""


class SeedOutsideGrid(MinPathError):
    """A seed or target point lies outside the grid rectangle."""


class UnreachedTarget(MinPathError):
    """Backtracking was asked to start from a point the front never reached."""


class StuckDescent(MinPathError):
    """Descent failed to decrease the distance for too many consecutive steps.

    Carries the last point reached.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class MaxStepsExceeded(MinPathError):
    """Backtracking exceeded its step budget before capturing a seed."""


class SegmentTraceFailed(MinPathError):
    """A per-segment geodesic solve failed during region evolution.

    Carries the segment index so callers can enlarge the tube radius.
    """

    def __init__(self, message, segment=None):
        super().__init__(message)
        self.segment = segment


class SolverDiverged(MinPathError):
    """An iterative linear solve did not reach its tolerance."""


class UnsupportedFormat(MinPathError):
    """An image or file format is not one of the supported kinds."""


class CorruptFile(MinPathError):
    """A file's contents do not match its declared structure."""


class HeaderMismatch(MinPathError):
    """A field file's payload size disagrees with its header."""
