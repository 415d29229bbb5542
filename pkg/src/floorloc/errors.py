"""Exception hierarchy shared by every module."""


class FlocError(Exception):
    """Base class for all errors raised by floorloc."""


class ValidationError(FlocError, ValueError):
    """Input failed a precondition (maps to CLI exit code 2)."""


class ConfigError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, *, line=None, byte=None, path=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if byte is not None:
            loc.append(f"byte {byte}")
        super().__init__(f"{': '.join(loc)}: {message}" if loc else message)
        self.line = line
        self.byte = byte
        self.path = path


class InvalidSpec(ValidationError):
    pass


class OriginOccupied(ValidationError):
    pass


class OriginOutOfBounds(ValidationError):
    pass


class AllZero(FlocError, ArithmeticError):
    pass


class DimensionMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class DuplicateId(ValidationError):
    pass


class ZeroVector(ValidationError):
    pass


class EmptyGraph(ValidationError):
    pass


class EmptyCluster(ValidationError):
    pass


class NormalizationUnderflow(FlocError, ArithmeticError):
    pass


class BadLabel(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class InconsistentConfig(ValidationError):
    pass


class StepError(FlocError):
    """Wraps an error raised while processing step ``step`` of a sequence."""

    def __init__(self, step, cause):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause
