"""Exception hierarchy shared by the package and mapped to CLI exit codes."""


class SdtgcnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SdtgcnError, ValueError):
    pass


class DataError(SdtgcnError, ValueError):
    """Input data violates a domain constraint (negative counts, bad records)."""


class RecordFormatError(DataError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DatasetTooSmallError(SdtgcnError):
    pass


class SplitTooSmallError(DatasetTooSmallError):
    pass


class ConfigError(SdtgcnError, ValueError):
    pass


class NumericalError(SdtgcnError, FloatingPointError):
    """A non-finite value appeared in a tensor, gradient or loss."""
