"""Exception hierarchy shared by every stage of the pipeline."""


class EppNetError(Exception):
    """Base class for all errors raised by this package."""


# skeleton files
class SkeletonParseError(EppNetError, ValueError):
    pass


class TruncatedFile(SkeletonParseError):
    pass


class MalformedNumber(SkeletonParseError):
    pass


class NonFiniteValue(SkeletonParseError):
    pass


class JointCountMismatch(SkeletonParseError):
    pass


class EmptySequence(EppNetError, ValueError):
    pass


# geometry / shapes
class ShapeMismatch(EppNetError, ValueError):
    pass


class TopologyShapeMismatch(ShapeMismatch):
    pass


class FrameSizeMismatch(ShapeMismatch):
    pass


class GridTooSmall(EppNetError, ValueError):
    pass


class EmptyIntersection(EppNetError, ValueError):
    pass


class IndexOutOfRange(EppNetError, IndexError):
    pass


class LabelOutOfRange(EppNetError, ValueError):
    pass


class LengthMismatch(EppNetError, ValueError):
    pass


class SampleMismatch(EppNetError, ValueError):
    pass


class EmptyDataset(EppNetError, ValueError):
    pass


class MissingScores(EppNetError, FileNotFoundError):
    pass


class FormatError(EppNetError, ValueError):
    """A PGM/PPM, checkpoint, CSV or bbox file does not follow its layout."""


# pipeline
class ConfigError(EppNetError, ValueError):
    pass


class StageDependencyMissing(EppNetError):
    pass
