"""Downstream models trained on representations, and ingestion of externally produced predictions."""
import enum
import logging
import os
import warnings

from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import expit

from .utils import (
    ConvergenceWarning, DimensionMismatchError, ParseError, SingularMatrixError, as_2d, check_same_rows)

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

DEFAULT_RIDGE = 1e-6
MAX_HALVINGS = 30


class GlmFamily(enum.Enum):
    logistic = "logistic"
    linear = "linear"


@dataclass
class GlmDiagnostics:
    iterations: int = 0
    converged: bool = True
    objective_trace: List[float] = field(default_factory=list)
    messages: List[str] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class GlmModel:
    """
    A ridge-penalized generalized linear model with an unpenalized intercept.

    Attributes
    ----------
    coefficients : np.ndarray
    intercept : float
    family : :class:`GlmFamily`
    ridge : float
    """

    coefficients: np.ndarray
    intercept: float
    family: GlmFamily
    ridge: float = DEFAULT_RIDGE
    diagnostics: GlmDiagnostics = field(default_factory=GlmDiagnostics, repr=False)

    def __post_init__(self):
        if self.ridge < 0:
            raise ValueError(f"ridge must be non-negative, got {self.ridge}")
        if not np.all(np.isfinite(self.coefficients)) or not np.isfinite(self.intercept):
            raise ValueError("GLM coefficients must be finite")

    @property
    def k(self) -> int:
        return self.coefficients.shape[0]

    def predict(self, T_new: Any) -> np.ndarray:
        return glm_predict(self, T_new)


def _penalty(k: int, ridge: float) -> np.ndarray:
    return np.concatenate([[0.0], np.full(k, ridge)])


def _logistic_objective(Z: np.ndarray, y: np.ndarray, beta: np.ndarray, penalty: np.ndarray) -> float:
    eta = Z @ beta
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta) + 0.5 * np.sum(penalty * beta ** 2))


def _solve(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    eigvals = linalg.eigvalsh(H)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], np.finfo(float).tiny):
        raise SingularMatrixError(
            f"The normal equations are singular (smallest eigenvalue {eigvals[0]:.3g}), use a positive ridge penalty")
    return linalg.solve(H, g, assume_a="pos")


def glm_fit(T: Any, y: Any, family: GlmFamily = GlmFamily.logistic, ridge: float = DEFAULT_RIDGE,
            tol: float = 1e-8, max_iter: int = 100) -> GlmModel:
    """
    Fit a ridge-penalized GLM on the scores ``T``.

    The linear family solves the ridge normal equations directly. The logistic family
    runs Newton iterations (iteratively reweighted least squares) on the penalized
    negative log-likelihood, halving a step whenever it would increase the objective, and
    stops once the largest coefficient change is at most ``tol``.

    Raises
    ------
    SingularMatrixError
        When the system is singular, which can only happen with ``ridge=0``.
    """
    family = GlmFamily(family)
    T = as_2d(T, "T")
    y = np.asarray(y, dtype=np.float64).ravel()
    check_same_rows(T, y, names=("T", "y"))
    n, k = T.shape
    if n <= k:
        raise DimensionMismatchError(f"A GLM on {k} columns needs more than {k} rows, got {n}")
    if ridge < 0 or tol <= 0:
        raise ValueError(f"ridge must be non-negative and tol positive, got {ridge} and {tol}")
    Z = np.hstack([np.ones((n, 1)), T])
    penalty = _penalty(k, ridge)
    diagnostics = GlmDiagnostics()

    if family == GlmFamily.linear:
        beta = _solve(Z.T @ Z + np.diag(penalty), Z.T @ y)
        diagnostics.iterations = 1
        return GlmModel(beta[1:], float(beta[0]), family, ridge, diagnostics)

    if not np.all((y == 0) | (y == 1)):
        raise ValueError("The logistic family needs a binary 0/1 target")
    beta = np.zeros(k + 1)
    objective = _logistic_objective(Z, y, beta, penalty)
    diagnostics.objective_trace.append(objective)
    diagnostics.converged = False
    for iteration in range(1, max_iter + 1):
        p = expit(Z @ beta)
        grad = Z.T @ (p - y) + penalty * beta
        weights = p * (1 - p)
        H = (Z * weights[:, None]).T @ Z + np.diag(penalty)
        step = _solve(H, grad)
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = beta - scale * step
            cand_objective = _logistic_objective(Z, y, candidate, penalty)
            if cand_objective <= objective:
                break
            scale /= 2.0
        else:
            candidate, cand_objective = beta, objective
        change = float(np.max(np.abs(candidate - beta)))
        beta, objective = candidate, cand_objective
        diagnostics.objective_trace.append(objective)
        diagnostics.iterations = iteration
        if change <= tol:
            diagnostics.converged = True
            break
    if not diagnostics.converged:
        message = f"Logistic regression did not converge in {max_iter} iterations, the classes may be separable"
        diagnostics.messages.append(message)
        logger.warning(message)
        warnings.warn(message, ConvergenceWarning, stacklevel=2)
    return GlmModel(beta[1:], float(beta[0]), family, ridge, diagnostics)


def glm_predict(model: GlmModel, T_new: Any) -> np.ndarray:
    """Probabilities for the logistic family, real predictions for the linear family."""
    T_new = as_2d(T_new, "T_new")
    if T_new.shape[1] != model.k:
        raise DimensionMismatchError(f"Model expects {model.k} columns, got {T_new.shape[1]}")
    linear = T_new @ model.coefficients + model.intercept
    if model.family == GlmFamily.logistic:
        return expit(linear)
    return linear


def _read_table(path: os.PathLike, required: Sequence[str]) -> pd.DataFrame:
    if not os.path.exists(path):
        raise FileNotFoundError(f"No such file: {path}")
    try:
        table = pd.read_csv(path, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as err:
        raise ParseError(f"Could not read {path}: {err}") from err
    missing = [c for c in required if c not in table.columns]
    if missing:
        raise ParseError(f"{path} lacks the columns {missing}")
    ids = pd.to_numeric(table["row_id"], errors="coerce")
    bad = ids.isna() | (ids != ids.round())
    if bad.any():
        raise ParseError("Invalid row id", row=int(np.argmax(bad.to_numpy())) + 2, column="row_id")
    table["row_id"] = ids.astype(np.int64)
    duplicated = table["row_id"].duplicated()
    if duplicated.any():
        i = int(np.argmax(duplicated.to_numpy()))
        raise ParseError(f"Duplicated row id {table['row_id'].iloc[i]}", row=i + 2, column="row_id")
    return table


def _ordered(table: pd.DataFrame, expected_row_ids: Sequence[int], path) -> pd.DataFrame:
    expected = np.asarray(expected_row_ids, dtype=np.int64)
    present = set(table["row_id"].tolist())
    missing = [int(i) for i in expected if int(i) not in present]
    if missing:
        raise ParseError(f"{path} lacks predictions for {len(missing)} rows, e.g. {missing[:5]}")
    wanted = set(expected.tolist())
    extra = [int(i) for i in table["row_id"] if int(i) not in wanted]
    if extra:
        raise ParseError(f"{path} holds rows outside the fold, e.g. {extra[:5]}")
    return table.set_index("row_id").loc[expected]


def load_external_predictions(path: os.PathLike, expected_row_ids: Sequence[int]) -> np.ndarray:
    """
    Read a ``row_id,yhat`` CSV produced by an external model and order it like ``expected_row_ids``.

    Raises
    ------
    ParseError
        When ids are malformed, duplicated, missing, or outside ``expected_row_ids``, or a
        prediction is not numeric.
    """
    table = _read_table(path, ("row_id", "yhat"))
    values = pd.to_numeric(table["yhat"], errors="coerce")
    if values.isna().any():
        raise ParseError("Non-numeric prediction", row=int(np.argmax(values.isna().to_numpy())) + 2, column="yhat")
    table["yhat"] = values
    return _ordered(table, expected_row_ids, path)["yhat"].to_numpy(dtype=np.float64)


def load_external_representation(path: os.PathLike, expected_row_ids: Sequence[int]) -> Tuple[np.ndarray, List[str]]:
    """
    Read a ``row_id,<score columns...>`` CSV holding a representation produced elsewhere.

    Returns
    -------
    scores : np.ndarray
        Ordered like ``expected_row_ids``.
    names : list of str
        The score column names.
    """
    table = _read_table(path, ("row_id",))
    names = [c for c in table.columns if c != "row_id"]
    for name in names:
        values = pd.to_numeric(table[name], errors="coerce")
        if values.isna().any():
            raise ParseError("Non-numeric score", row=int(np.argmax(values.isna().to_numpy())) + 2, column=name)
        table[name] = values
    ordered = _ordered(table, expected_row_ids, path)
    return ordered[names].to_numpy(dtype=np.float64).reshape(len(expected_row_ids), len(names)), names


def write_representation(path: os.PathLike, scores: Any, row_ids: Sequence[int],
                         names: Optional[Sequence[str]] = None):
    """Write scores as a ``row_id,<score columns...>`` CSV readable by :func:`load_external_representation`."""
    scores = as_2d(scores, "scores")
    row_ids = np.asarray(row_ids, dtype=np.int64)
    if row_ids.shape[0] != scores.shape[0]:
        raise DimensionMismatchError(f"Got {scores.shape[0]} score rows and {row_ids.shape[0]} row ids")
    if names is None:
        names = [f"t{h + 1}" for h in range(scores.shape[1])]
    table = pd.DataFrame(scores, columns=list(names))
    table.insert(0, "row_id", row_ids)
    table.to_csv(path, index=False)
