"""Exception hierarchy shared by every module."""


class PanPretrainError(Exception):
    """Base class for all package errors."""


class InvalidKernel(PanPretrainError, ValueError):
    pass


class InvalidRange(PanPretrainError, ValueError):
    pass


class NothingToSynthesize(PanPretrainError, ValueError):
    pass


class TooFewBands(PanPretrainError, ValueError):
    pass


class BandIndexError(PanPretrainError, IndexError):
    pass


class ImageTooSmall(PanPretrainError, ValueError):
    pass


class ShapeError(PanPretrainError, ValueError):
    pass


class StaleTape(PanPretrainError, RuntimeError):
    """Raised when backward() is handed a tape recorded with different parameters."""


class NonFiniteGradient(PanPretrainError, FloatingPointError):
    pass


class NotApplicable(PanPretrainError, ValueError):
    pass


class EmptyCorpus(PanPretrainError, FileNotFoundError):
    pass


class FormatError(PanPretrainError, ValueError):
    """Malformed file. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(PanPretrainError, ValueError):
    pass
