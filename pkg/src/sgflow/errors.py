"""Exception types shared across the package."""


class SgflowError(Exception):
    """Base class for all sgflow errors."""


class ShapeError(SgflowError, ValueError):
    """An array argument has an incompatible shape or length."""


class ParameterError(SgflowError, ValueError):
    """A scalar parameter is outside its admissible range."""


class DivergedStateError(SgflowError, RuntimeError):
    """A residual evaluation produced a non-finite value.

    Carries the index of the first offending cell (or -1 for a
    boundary-penalty term).
    """

    def __init__(self, cell_index: int, message: str | None = None):
        self.cell_index = cell_index
        super().__init__(message or f"non-finite residual at cell {cell_index}")


class SolverError(SgflowError, RuntimeError):
    """A linear solve failed to reach the requested tolerance."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class NumericalBreakdownError(SolverError):
    """An iterative solve encountered NaN/Inf and cannot continue."""


class SingularSystemError(SolverError):
    """A linear system is singular to working precision."""


class StagnationError(SgflowError, RuntimeError):
    """The descent flow cannot make progress at the smallest damping."""
