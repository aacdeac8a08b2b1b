"""Exception hierarchy shared by every laserguard module."""


class LaserGuardError(Exception):
    """Base class for all errors raised by laserguard."""


# audio_io
class NotFound(LaserGuardError, FileNotFoundError):
    pass


class UnsupportedFormat(LaserGuardError, ValueError):
    pass


class CorruptHeader(LaserGuardError, ValueError):
    pass


class EmptyAudio(LaserGuardError, ValueError):
    pass


# dwt
class SignalTooShort(LaserGuardError, ValueError):
    pass


class InvalidLevel(LaserGuardError, ValueError):
    pass


class InconsistentShapes(LaserGuardError, ValueError):
    pass


# stats
class EmptyArray(LaserGuardError, ValueError):
    pass


class NonFiniteInput(LaserGuardError, ValueError):
    pass


class TooFewSamples(LaserGuardError, ValueError):
    pass


class DegenerateData(LaserGuardError, ValueError):
    pass


# features
class ClipTooShort(LaserGuardError, ValueError):
    pass


class EmptyFrames(LaserGuardError, ValueError):
    pass


# svm
class SingleClassData(LaserGuardError, ValueError):
    pass


class DimensionMismatch(LaserGuardError, ValueError):
    pass


class NonFiniteFeature(LaserGuardError, ValueError):
    pass


class VersionMismatch(LaserGuardError, ValueError):
    pass


class CorruptModel(LaserGuardError, ValueError):
    pass


# dataset
class MalformedRow(LaserGuardError, ValueError):
    pass


class DuplicateKey(LaserGuardError, ValueError):
    pass


class UnknownLabel(LaserGuardError, ValueError):
    pass


class IncompleteCorpus(LaserGuardError, ValueError):
    pass


class InvalidBand(LaserGuardError, ValueError):
    pass


class IoError(LaserGuardError, OSError):
    pass


# evaluation
class LeakageError(LaserGuardError, RuntimeError):
    """A fitted statistic saw a clip outside the training partition."""
