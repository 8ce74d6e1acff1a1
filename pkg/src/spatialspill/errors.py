"""Exception hierarchy.

Every error raised on bad data or an ill-posed model derives from
:class:`SpatialSpillError`; the CLI maps these to exit code 1 and prints
the class name with the message.
"""


class SpatialSpillError(Exception):
    """Base class for data and model errors."""


# ingest
class MissingColumn(SpatialSpillError):
    pass


class NonNumericCell(SpatialSpillError):
    pass


class DuplicateId(SpatialSpillError):
    pass


class EmptyTable(SpatialSpillError):
    pass


class InvalidValue(SpatialSpillError):
    """A parsed value violates a column's declared domain."""


class UnsupportedGeometryKind(SpatialSpillError):
    pass


class MissingIdProperty(SpatialSpillError):
    pass


class MalformedRing(SpatialSpillError):
    pass


class AlignmentError(SpatialSpillError):
    """Region id sets of two inputs differ."""

    def __init__(self, message, missing_left=(), missing_right=()):
        super().__init__(message)
        self.missing_left = tuple(missing_left)
        self.missing_right = tuple(missing_right)


class BadHeader(SpatialSpillError):
    pass


class UnknownNeighborId(SpatialSpillError):
    pass


class NeighborCountMismatch(SpatialSpillError):
    pass


# weights
class DegenerateGeometry(SpatialSpillError):
    pass


class CoincidentCentroids(SpatialSpillError):
    pass


class ZeroMatrix(SpatialSpillError):
    pass


# esda
class ConstantColumn(SpatialSpillError):
    pass


class ConstantVector(SpatialSpillError):
    pass


class LengthMismatch(SpatialSpillError):
    pass


# estimators / effects / dgp
class SingularDesign(SpatialSpillError):
    pass


class RankDeficientAfterLag(SingularDesign):
    pass


class OutOfStationaryRegion(SpatialSpillError):
    pass


class NonConvergence(SpatialSpillError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DimensionMismatch(SpatialSpillError):
    pass


class MissingExternalData(SpatialSpillError):
    pass
