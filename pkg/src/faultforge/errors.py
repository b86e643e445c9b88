"""Exception hierarchy shared by every faultforge module."""


class FaultForgeError(Exception):
    """Base class for all errors raised by faultforge."""


class DecodeError(FaultForgeError):
    pass


class SchemaError(FaultForgeError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class UnsupportedSize(FaultForgeError):
    pass


class DimensionMismatch(FaultForgeError):
    pass


class TransportError(FaultForgeError):
    pass


class BackendError(FaultForgeError):
    def __init__(self, status: int, message: str = ""):
        self.status = status
        super().__init__(f"backend returned HTTP {status}" + (f": {message}" if message else ""))


class LengthMismatch(FaultForgeError):
    pass


class DegenerateVariance(FaultForgeError):
    pass


class EmptyGroup(FaultForgeError):
    pass


class EmptyInput(FaultForgeError):
    pass


class LutFormatError(FaultForgeError):
    """Base for `.flut` decoding failures."""


class MagicError(LutFormatError):
    pass


class VersionError(LutFormatError):
    pass


class ChecksumError(LutFormatError):
    pass


class TruncationError(LutFormatError):
    pass
