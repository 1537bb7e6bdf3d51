"""Exception taxonomy shared by every module.

Validation problems (bad shapes, bad values, bad files) subclass ValueError
so callers can catch them generically; runtime failures stay on RuntimeError.
"""


class SmmtError(Exception):
    """Base class for package-specific errors."""


class DimensionError(SmmtError, ValueError):
    """Operand shapes are incompatible."""


class InputError(SmmtError, ValueError):
    """An argument value is outside its contract."""


class NumericError(SmmtError, ArithmeticError):
    """A non-finite value appeared where finite math is required."""


class FormatError(SmmtError, ValueError):
    """A persisted file has a bad magic number, version, or layout."""


class TrainingError(SmmtError, RuntimeError):
    """Training diverged; carries the epoch where it happened."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
