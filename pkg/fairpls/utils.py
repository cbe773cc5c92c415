from typing import Any, Dict, Iterable, Optional

import numpy as np


def as_2d(values: Any, name: str = "matrix") -> np.ndarray:
    """Coerce a vector or matrix into a 2D ``float64`` array, treating vectors as a single column."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be one or two dimensional, got shape {arr.shape}")
    return arr


def canonical_sign(vector: np.ndarray, atol: float = 0.0) -> float:
    """
    The sign that makes the first non-zero entry of ``vector`` positive.

    Returns ``1.0`` for the zero vector.
    """
    nonzero = np.flatnonzero(np.abs(vector) > atol)
    if nonzero.size == 0:
        return 1.0
    return -1.0 if vector[nonzero[0]] < 0 else 1.0


def check_same_rows(*arrays: np.ndarray, names: Optional[Iterable[str]] = None):
    counts = [a.shape[0] for a in arrays]
    if len(set(counts)) > 1:
        if names is None:
            names = [f"arg{i}" for i in range(len(arrays))]
        desc = ", ".join(f"{n}={c}" for n, c in zip(names, counts))
        raise DimensionMismatchError(f"Row counts differ: {desc}")


class FairPlsError(Exception):
    """Base type for all errors raised by :mod:`fairpls`."""

    def details(self) -> Dict[str, Any]:
        return {}


class DimensionMismatchError(FairPlsError, ValueError):
    """Raised when matrix dimensions are incompatible."""


class CenteringError(FairPlsError, ValueError):
    """Raised when an input that must be column-centered is not."""


class DegenerateInputError(FairPlsError, ValueError):
    """Raised when an input carries no usable variation, e.g. zero variance or an empty group."""


class PreconditionError(FairPlsError, ValueError):
    """Raised when a mathematical precondition of an algorithm does not hold."""

    def __init__(self, message: str, **values):
        super().__init__(message)
        self.values = values

    def details(self) -> Dict[str, Any]:
        return dict(self.values)


class SingularMatrixError(FairPlsError, ValueError):
    """Raised when a linear system is singular. A positive ridge usually resolves it."""

    suggestion = "use a positive ridge penalty"

    def details(self) -> Dict[str, Any]:
        return {"suggestion": self.suggestion}


class ConvergenceError(FairPlsError, RuntimeError):
    """Raised when an iteration fails to converge and has no usable result."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations

    def details(self) -> Dict[str, Any]:
        return {"residual": self.residual, "iterations": self.iterations}


class UndefinedMetricError(FairPlsError, ValueError):
    """Raised when a fairness metric is undefined for the given data."""


class ParseError(FairPlsError, ValueError):
    """Raised when a CSV file cannot be parsed, with the offending location."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        if row is not None or column is not None:
            message = f"{message} (row {row}, column {column!r})"
        super().__init__(message)
        self.row = row
        self.column = column

    def details(self) -> Dict[str, Any]:
        return {"row": self.row, "column": self.column}


class ConfigurationError(FairPlsError, ValueError):
    """Raised when a recipe or experiment configuration is invalid."""


class FitWarning(UserWarning):
    """
    Indicates that a fit stopped early or produced fewer components than requested.

    The fitted model is still returned and records the same message in its diagnostics.
    """


class ConvergenceWarning(FitWarning):
    """Indicates that an iteration hit its budget and the last iterate was used."""


class DataWarning(UserWarning):
    """Indicates that input data was altered during encoding, e.g. a constant column was dropped."""
