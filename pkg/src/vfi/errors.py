"""Exception hierarchy.  Every error carries a stable machine-readable ``code``."""

from __future__ import annotations


class VfiError(Exception):
    code = "vfi_error"
    exit_status = 1


class ShapeError(VfiError, ValueError):
    code = "shape_mismatch"

    def __init__(self, op: str, dimension: str, expected, got):
        self.op = op
        self.dimension = dimension
        self.expected = expected
        self.got = got
        super().__init__(f"{op}: {dimension} mismatch (expected {expected}, got {got})")


class GradientError(VfiError, RuntimeError):
    code = "tape_inconsistent"


class ConfigError(VfiError, ValueError):
    code = "bad_config"
    exit_status = 2


class MemoryGuardError(VfiError, MemoryError):
    code = "memory_guard"
    exit_status = 3


class MissingFrameError(VfiError, FileNotFoundError):
    code = "missing_frame"
    exit_status = 4


class DimensionMismatchError(VfiError, ValueError):
    code = "dimension_mismatch"
    exit_status = 5


class UnsupportedFormatError(VfiError, ValueError):
    code = "unsupported_format"
    exit_status = 6


class CheckpointError(VfiError, ValueError):
    code = "checkpoint_mismatch"
    exit_status = 7


class DivergenceError(VfiError, FloatingPointError):
    code = "diverged"
    exit_status = 8
