"""Exception types raised across the package."""


class CpdParseError(Exception):
    """Base class for all package errors."""


class SdpFormatError(CpdParseError):
    """Malformed SDP input. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class LabelVocabularyError(CpdParseError):
    """A label is not part of the frozen label vocabulary."""


class ShapeError(CpdParseError, ValueError):
    pass


class BudgetExceededError(CpdParseError, MemoryError):
    """Refused to materialize a dense tensor above the element budget."""


class TrainingDivergenceError(CpdParseError, FloatingPointError):
    """Non-finite loss or gradient. ``node`` names the offending tape node."""

    def __init__(self, message, node=None):
        self.node = node
        super().__init__(message if node is None else f"{message} (node: {node})")
