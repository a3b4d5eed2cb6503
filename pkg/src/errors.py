"""
Exception hierarchy for the splatting engine.

Every error the engine raises on purpose derives from one of the classes below.
They subclass the built-in ValueError / ArithmeticError so callers written against
the built-ins keep working, and each carries the process exit code the command
line maps it to.

Exit codes:
    0 - success
    2 - input or validation failure
    3 - numerical failure
"""

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class DegenerateInputError(ValueError):
    """A geometric input has no valid interpretation (zero quaternion, bad camera)."""
    exit_code = EXIT_INPUT


class ContractViolation(ValueError):
    """Arrays handed to an operation disagree in shape or length."""
    exit_code = EXIT_INPUT


class ConfigError(ValueError):
    """A run configuration, hook id, policy or stage name is not valid."""
    exit_code = EXIT_INPUT


class PruneError(ValueError):
    """Pruning would remove every Gaussian of a cloud."""
    exit_code = EXIT_INPUT


class OracleCapExceeded(ValueError):
    """The brute-force reference renderer refuses clouds above its cap."""
    exit_code = EXIT_INPUT


class InputFileError(ValueError):
    """
    A file could not be parsed.

    Attributes:
        path (str): Offending file
        offset (int | None): Byte offset of the problem when known
    """
    exit_code = EXIT_INPUT

    def __init__(self, path: str, message: str, offset: int = None):
        self.path = str(path)
        self.offset = offset
        where = f"{self.path} (offset {offset})" if offset is not None else self.path
        super().__init__(f"{where}: {message}")


class NumericalError(ArithmeticError):
    """
    Non-finite values appeared during optimization.

    Attributes:
        group (str | None): Parameter group that carried the non-finite value
    """
    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, group: str = None):
        self.group = group
        super().__init__(message)


def exit_code_for(exc: BaseException) -> int:
    """
    Map an exception to the process exit code.

    Args:
        exc (BaseException): Raised exception

    Returns:
        int: 2 for input/validation errors, 3 for numerical errors, 1 otherwise
    """
    code = getattr(exc, "exit_code", None)
    if code is not None:
        return code
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError)):
        return EXIT_INPUT
    return 1
