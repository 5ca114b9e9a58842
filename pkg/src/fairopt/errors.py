"""Exception hierarchy for fairopt."""


class FairOptError(Exception):
    """Base class for all library errors."""


class DataError(FairOptError, ValueError):
    """Bad or unusable input data (exit code 2 in the CLI)."""


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateColumnError(DataError):
    def __init__(self, column):
        super().__init__(f"column {column!r} has zero variance")
        self.column = column


class ShapeError(FairOptError, ValueError):
    pass


class NumericError(FairOptError, ArithmeticError):
    pass


class LevelLimitError(FairOptError, ValueError):
    """Requested moment level exceeds the configured tensor budget."""


class ModeError(DataError):
    pass


class CategoryError(DataError):
    pass


class GroupError(DataError):
    pass


class CellError(DataError):
    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = tuple(cells)


class EstimationError(DataError):
    pass


class ContractError(FairOptError, ValueError):
    pass


class ResidualTooLargeError(FairOptError, ValueError):
    def __init__(self, message, worst_level, worst_residual):
        super().__init__(message)
        self.worst_level = worst_level
        self.worst_residual = worst_residual


class PMFError(FairOptError, ValueError):
    pass


class UnsupportedLevelError(FairOptError, ValueError):
    pass


class SolverError(FairOptError, RuntimeError):
    """The numerical backend failed in a way the caller cannot recover from."""
