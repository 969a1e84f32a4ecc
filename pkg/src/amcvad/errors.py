"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class AMCError(Exception):
    exit_code = 1
    kind = "error"


class ConfigError(AMCError, ValueError):
    exit_code = 2
    kind = "bad-config"


class DataError(AMCError):
    exit_code = 3
    kind = "invalid-data"


class DecodeError(DataError):
    kind = "decode-error"


class MissingFlowError(DataError):
    kind = "missing-flow"


class ShapeError(DataError, ValueError):
    kind = "shape-error"


class CheckpointError(DataError):
    kind = "checkpoint-incompatible"


class CalibrationError(DataError):
    """Raised when scoring needs (w_F, w_I) that are absent or degenerate."""

    kind = "calibration-required"


class NumericError(AMCError, ArithmeticError):
    exit_code = 4
    kind = "numeric-failure"
