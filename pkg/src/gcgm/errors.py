"""Exception hierarchy shared by all gcgm modules."""


class GCGMError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(GCGMError, ValueError):
    pass


class NonFiniteValue(GCGMError, FloatingPointError):
    pass


class NotScalar(GCGMError, ValueError):
    pass


class TooFewPoints(GCGMError, ValueError):
    pass


class CollinearInput(GCGMError, ValueError):
    pass


class SchemaError(GCGMError, ValueError):
    """Raised when a persisted file has the wrong version or a malformed layout."""


class InvalidSpec(GCGMError, ValueError):
    pass


class EmptyView(GCGMError, ValueError):
    pass


class ScoreOutOfRange(GCGMError, ValueError):
    pass


class NoPositives(GCGMError, ValueError):
    pass


class NonFiniteAffinity(NonFiniteValue):
    pass


class EmptyIntersection(GCGMError, ValueError):
    pass


class ConfigError(GCGMError, ValueError):
    pass
