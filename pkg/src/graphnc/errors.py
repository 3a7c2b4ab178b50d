"""Exception types raised across the package."""


class GraphNCError(Exception):
    """Base class for all package errors."""


class DatasetError(GraphNCError, ValueError):
    """A dataset directory or score file is missing or malformed."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class DimensionError(GraphNCError, ValueError):
    """Operand shapes do not conform."""


class TrainingError(GraphNCError, RuntimeError):
    """Optimization produced a non-finite value or violated a precondition."""


class ContractError(GraphNCError, RuntimeError):
    """An API contract was violated, e.g. a stale forward cache."""
