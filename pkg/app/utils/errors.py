"""Exception hierarchy shared by the pipeline and the numerical code.

Each class carries the process exit code the CLI maps it to.
"""

__all__ = [
    "GCPLError",
    "ConfigError",
    "ShapeError",
    "DivergenceError",
    "FrozenModelError",
    "StorageError",
    "FormatError",
    "DataError",
]


class GCPLError(Exception):
    exit_code = 1


class ConfigError(GCPLError):
    exit_code = 2


class ShapeError(GCPLError, ValueError):
    pass


class DivergenceError(GCPLError):
    """Non-finite value. `step` is set when raised from a training loop."""

    exit_code = 3

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class FrozenModelError(GCPLError):
    pass


class StorageError(GCPLError):
    exit_code = 4


class FormatError(StorageError):
    pass


class DataError(GCPLError, ValueError):
    pass
