"""Exception types raised by the engine."""


class CodeSfmError(Exception):
    """Base class for all engine errors."""


class NonPositiveDepth(CodeSfmError):
    pass


class NegativeDepth(CodeSfmError):
    pass


class ProximityOutOfRange(CodeSfmError):
    pass


class CodeSizeMismatch(CodeSfmError):
    pass


class LevelOutOfRange(CodeSfmError):
    pass


class FormatError(CodeSfmError):
    """Malformed artifact or dataset file (bad magic, version, shape...)."""


class UnsupportedFormat(CodeSfmError):
    pass


class IoError(CodeSfmError):
    """File missing or unreadable."""


class DimensionMismatch(CodeSfmError):
    pass


class UnknownVariable(CodeSfmError):
    pass


class UnknownFrame(CodeSfmError):
    pass


class IndefiniteSystem(CodeSfmError):
    """Damped normal equations could not be factorized; raise damping."""


class DivergenceDetected(CodeSfmError):
    """Cost became NaN/Inf during optimization."""


class SingularBlock(CodeSfmError):
    """Schur block not invertible even after regularization."""


class InsufficientOverlap(CodeSfmError):
    """Too few master pixels warp into any partner frame."""


class InitializationFailed(CodeSfmError):
    pass


class TrackingLost(CodeSfmError):
    pass
