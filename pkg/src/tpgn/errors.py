"""Exception types shared across the package."""


class TpgnError(Exception):
    """Base class for all package-specific errors."""


class ParseError(TpgnError):
    """A dataset line could not be parsed; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptyCorpusError(TpgnError):
    pass


class NoCommentsError(TpgnError):
    pass


class EmptyInputError(TpgnError):
    pass


class UnknownWordError(TpgnError):
    pass


class ShapeMismatchError(TpgnError):
    pass


class EmptySequenceError(TpgnError):
    pass


class NonScalarLossError(TpgnError):
    pass


class EmptyArticleError(TpgnError):
    pass


class EmptyTargetError(TpgnError):
    pass


class NonFiniteLossError(TpgnError):
    pass


class CorpusTooSmallError(TpgnError):
    pass
