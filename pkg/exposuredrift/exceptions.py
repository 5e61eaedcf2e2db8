from __future__ import annotations


class ExposureDriftError(Exception):
    """Base class for every error raised by the package."""


class DataValidationError(ExposureDriftError, ValueError):
    def __init__(self, message: str, *, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalAbort(ExposureDriftError, RuntimeError):
    def __init__(self, message: str, *, iteration: int | None = None) -> None:
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)


class UsageError(ExposureDriftError, ValueError):
    pass


__all__ = ["ExposureDriftError", "DataValidationError", "NumericalAbort", "UsageError"]
