"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    pass


class InvalidConfigError(ValueError):
    pass


class InputTooShortError(ValueError):
    pass


class BatchTooSmallError(ValueError):
    pass


class DegenerateLabelError(ValueError):
    """Raised when a computation needs both classes but sees only one."""


class DegenerateScoresError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


class FormatError(ValueError):
    """Unreadable or unsupported file content."""


class NonFiniteLossError(RuntimeError):
    pass


class FoldFailedError(RuntimeError):
    """A fold's training or scoring failed; ``fold`` says which."""

    def __init__(self, fold: int, cause: Exception):
        super().__init__(f"fold {fold} failed: {type(cause).__name__}: {cause}")
        self.fold = fold
