class SrepccError(Exception):
    pass


class ConfigError(SrepccError, ValueError):
    pass


class IntegrityError(SrepccError):
    pass


class PlyError(SrepccError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(SrepccError, ValueError):
    pass


class TapeError(SrepccError, RuntimeError):
    pass


class MetricError(SrepccError, ValueError):
    pass


class DecodeError(SrepccError):
    pass


class EncodeError(SrepccError, ValueError):
    pass


class BitstreamError(DecodeError):
    pass


class BadMagicError(BitstreamError):
    pass


class UnsupportedVersionError(BitstreamError):
    pass


class TruncatedError(BitstreamError):
    pass
