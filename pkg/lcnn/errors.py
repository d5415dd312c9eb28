from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from lcnn.nn.training import TrainReport


class LcnnError(Exception):
    """Base class for every error raised by the package."""


class ShapeError(LcnnError, ValueError):
    pass


class ConfigError(LcnnError, ValueError):
    pass


class DataError(LcnnError, ValueError):
    pass


class DataFormatError(DataError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        location = ""
        if row is not None or column is not None:
            location = f" (row={row}, column={column})"
        super().__init__(f"{message}{location}")
        self.row = row
        self.column = column


class EmptyBatchError(DataError):
    pass


class SpecError(LcnnError, ValueError):
    pass


class DomainError(LcnnError, ValueError):
    pass


class UnsupportedOperationError(LcnnError):
    pass


class DegenerateClassifierError(LcnnError):
    pass


class UndefinedTestError(LcnnError):
    pass


class InsufficientSamplesError(UndefinedTestError):
    pass


class DivergenceError(LcnnError):
    """Training produced a non-finite objective; `report` holds the last finite epochs."""

    def __init__(self, message: str, report: "TrainReport | None" = None):
        super().__init__(message)
        self.report = report
