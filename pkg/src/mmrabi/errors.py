"""Exception hierarchy shared by every engine.

Each class carries the process exit code the CLI uses for its category.
"""


class MMRabiError(Exception):
    exit_code = 1


class ParameterError(MMRabiError, ValueError):
    exit_code = 2


class ConfigError(MMRabiError):
    exit_code = 2

    def __init__(self, message, key_path=None):
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)
        self.key_path = key_path


class ResourceError(MMRabiError):
    exit_code = 3


class ConvergenceError(MMRabiError):
    """Iterative procedure failed to converge; ``trace`` holds its history."""

    exit_code = 4

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class TruncationBudgetError(ConvergenceError):
    """Discarded weight exceeded its budget; ``trace`` is the partial time series."""


class PrecisionError(MMRabiError, ArithmeticError):
    exit_code = 5
