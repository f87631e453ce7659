"""Exception hierarchy shared across the package.

Every domain error carries a short ``kind`` string so the CLI can print a
single machine-parseable line (``error: <kind>: <message>``).
"""


class SplatStyleError(Exception):
    kind = "Error"


class EmptyScene(SplatStyleError):
    kind = "EmptyScene"


class MismatchedForward(SplatStyleError):
    kind = "MismatchedForward"


class EmptyCameraList(SplatStyleError):
    kind = "EmptyCameraList"


class NonDivisibleResolution(SplatStyleError):
    kind = "NonDivisibleResolution"


class ShapeMismatch(SplatStyleError):
    kind = "ShapeMismatch"


class DimensionMismatch(SplatStyleError):
    kind = "DimensionMismatch"


class TimestepMismatch(SplatStyleError):
    kind = "TimestepMismatch"


class IndexOutOfRange(SplatStyleError):
    kind = "IndexOutOfRange"


class DegenerateAlpha(SplatStyleError):
    kind = "DegenerateAlpha"


class TooSmallImage(SplatStyleError):
    kind = "TooSmallImage"


class ChannelMismatch(SplatStyleError):
    kind = "ChannelMismatch"


class DivergenceDetected(SplatStyleError):
    kind = "DivergenceDetected"


class ZeroDescriptor(SplatStyleError):
    kind = "ZeroDescriptor"


class LengthMismatch(SplatStyleError):
    kind = "LengthMismatch"


class TooShort(SplatStyleError):
    kind = "TooShort"


class MalformedFile(SplatStyleError):
    kind = "MalformedFile"


class UnsupportedCameraModel(SplatStyleError):
    kind = "UnsupportedCameraModel"


class MalformedHeader(SplatStyleError):
    kind = "MalformedHeader"


class TruncatedBody(SplatStyleError):
    kind = "TruncatedBody"


class ConfigError(SplatStyleError):
    kind = "ConfigError"
