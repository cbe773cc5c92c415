"""Representation quality and fairness metrics."""
import logging
import math

from dataclasses import asdict, dataclass
from typing import Any, Dict, NamedTuple, Optional

import numpy as np
from scipy import stats

from .encoding import MatrixLike, matrix_values
from .utils import DegenerateInputError, DimensionMismatchError, UndefinedMetricError, as_2d, check_same_rows

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

NAN = float("nan")


def cov2(T: Any, Z: Any) -> float:
    """
    The squared Frobenius norm of the empirical cross-covariance ``T^T Z / n``.

    Both inputs are centered first, so the value is the sum of the squared covariances
    of every column of ``T`` with every column of ``Z``.
    """
    T = as_2d(T, "T")
    Z = as_2d(Z, "Z")
    check_same_rows(T, Z, names=("T", "Z"))
    if T.shape[1] == 0 or Z.shape[1] == 0:
        return 0.0
    T = T - T.mean(axis=0)
    Z = Z - Z.mean(axis=0)
    C = T.T @ Z / T.shape[0]
    return float(np.sum(C ** 2))


def reconstruction_error(X: MatrixLike, model) -> float:
    """
    The relative reconstruction error ``Tr((X - X^)^T (X - X^)) / Tr(X^T X)`` where
    ``X^`` maps ``X`` through the model's scores and back through its loadings.

    A model without components reconstructs nothing and scores exactly ``1``.

    Raises
    ------
    DegenerateInputError
        When ``X`` is null.
    """
    X = matrix_values(X, "X")
    total = float(np.sum(X ** 2))
    if total == 0:
        raise DegenerateInputError("The reconstruction error of a null matrix is undefined")
    residual = X - model.reconstruct(model.transform(X))
    return float(np.sum(residual ** 2)) / total


def _binary(values: Any, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must be binary 0/1")
    return arr


def _groups(s: np.ndarray, n: int):
    if s.shape[0] != n:
        raise DimensionMismatchError(f"Got {n} predictions and {s.shape[0]} group labels")
    g0, g1 = s == 0, s == 1
    if not g0.any() or not g1.any():
        raise UndefinedMetricError("Both sensitive groups must be non-empty")
    return g0, g1


class DisparateImpact(NamedTuple):
    di: float
    ci_lo: float
    ci_hi: float

    @property
    def degenerate(self) -> bool:
        """Whether no positive prediction was made in the unprivileged group, leaving the interval undefined."""
        return self.di == 0.0


def disparate_impact(yhat: Any, s: Any, alpha: float = 0.05) -> DisparateImpact:
    """
    The ratio of positive prediction rates ``P(yhat=1 | s=0) / P(yhat=1 | s=1)`` with a
    ``1 - alpha`` confidence interval from the delta method on the log ratio.

    ``s = 1`` marks the privileged group.

    Raises
    ------
    UndefinedMetricError
        When a group is empty or the privileged group has no positive prediction.
    """
    yhat = _binary(yhat, "yhat")
    s = _binary(s, "s")
    g0, g1 = _groups(s, yhat.shape[0])
    n0, n1 = int(g0.sum()), int(g1.sum())
    p0, p1 = yhat[g0].mean(), yhat[g1].mean()
    if p1 == 0:
        raise UndefinedMetricError("No positive prediction in the privileged group")
    if p0 == 0:
        logger.debug("No positive prediction in the unprivileged group, disparate impact is 0")
        return DisparateImpact(0.0, 0.0, 0.0)
    di = p0 / p1
    v = (1 - p0) / (n0 * p0) + (1 - p1) / (n1 * p1)
    z = stats.norm.ppf(1 - alpha / 2)
    half = z * math.sqrt(v)
    return DisparateImpact(float(di), float(math.exp(math.log(di) - half)), float(math.exp(math.log(di) + half)))


def ks_statistic(yhat: Any, s: Any) -> float:
    """The two-sample Kolmogorov-Smirnov distance between the predictions of the two groups."""
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    s = _binary(s, "s")
    g0, g1 = _groups(s, yhat.shape[0])
    return float(stats.ks_2samp(yhat[g0], yhat[g1]).statistic)


def eopp_ratio(yhat: Any, y: Any, s: Any) -> float:
    """
    The equality-of-opportunity ratio ``TPR_0 / TPR_1`` of group-conditional true positive rates.

    Raises
    ------
    UndefinedMetricError
        When a group has no positive ground truth or the privileged group's rate is zero.
    """
    yhat = _binary(yhat, "yhat")
    y = _binary(y, "y")
    s = _binary(s, "s")
    check_same_rows(yhat, y, s, names=("yhat", "y", "s"))
    rates = []
    for g in (0, 1):
        stratum = (s == g) & (y == 1)
        if not stratum.any():
            raise UndefinedMetricError(f"No positive ground truth in group {g}")
        rates.append(yhat[stratum].mean())
    if rates[1] == 0:
        raise UndefinedMetricError("The privileged group's true positive rate is zero")
    return float(rates[0] / rates[1])


def accuracy(yhat: Any, y: Any) -> float:
    yhat = np.asarray(yhat).ravel()
    y = np.asarray(y).ravel()
    check_same_rows(yhat, y, names=("yhat", "y"))
    return float(np.mean(yhat == y))


def mean_squared_error(yhat: Any, y: Any) -> float:
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    check_same_rows(yhat, y, names=("yhat", "y"))
    return float(np.mean((yhat - y) ** 2))


@dataclass
class FairnessReport:
    """
    Evaluation of one representation, and optionally of a predictor trained on it.

    Fields that do not apply are ``nan``: ``di`` and ``eopp`` are for classification,
    ``ks`` for regression.
    """

    cov2_rep_target: float = NAN
    cov2_rep_sensitive: float = NAN
    reconstruction_error: float = NAN
    di: float = NAN
    di_ci_lo: float = NAN
    di_ci_hi: float = NAN
    di_degenerate: bool = False
    ks: float = NAN
    eopp: float = NAN
    accuracy: float = NAN
    mse: float = NAN

    def __post_init__(self):
        if not math.isnan(self.di) and not (self.di_ci_lo <= self.di <= self.di_ci_hi):
            raise ValueError(f"Disparate impact {self.di} lies outside [{self.di_ci_lo}, {self.di_ci_hi}]")
        if not math.isnan(self.ks) and not 0.0 <= self.ks <= 1.0:
            raise ValueError(f"KS statistic {self.ks} lies outside [0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def fields(cls):
        return list(cls.__dataclass_fields__)


def evaluate_representation(model, X: MatrixLike, Y: Any, S: Any,
                            scores: Optional[np.ndarray] = None) -> FairnessReport:
    """
    Score a fitted representation on ``X``: its squared covariance with the target and
    with the sensitive attribute, and its relative reconstruction error when the model
    can reconstruct.
    """
    T = model.transform(X) if scores is None else scores
    report = FairnessReport(cov2(T, Y), cov2(T, S))
    if hasattr(model, "reconstruct"):
        report.reconstruction_error = reconstruction_error(X, model)
    return report


def dataset_bias(y: Any, s: Any, task: str = "classification", alpha: float = 0.05) -> FairnessReport:
    """
    The bias already present in the ground truth: disparate impact with its confidence
    interval for binary targets, the KS statistic for continuous ones.
    """
    if task == "classification":
        di = disparate_impact(y, s, alpha)
        return FairnessReport(di=di.di, di_ci_lo=di.ci_lo, di_ci_hi=di.ci_hi, di_degenerate=di.degenerate)
    if task == "regression":
        return FairnessReport(ks=ks_statistic(y, s))
    raise ValueError(f"Unknown task {task!r}")
