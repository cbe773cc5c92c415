"""
Standard Partial Least Squares by NIPALS, the shared projection model behaviour, and a
power-iteration eigen solver.
"""
import logging
import warnings

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np

from .encoding import CenteringStats, MatrixLike, matrix_values, require_centered
from .utils import (
    ConvergenceError, ConvergenceWarning, DimensionMismatchError, FitWarning, PreconditionError, canonical_sign,
    check_same_rows)

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# A residual whose Frobenius norm falls below this fraction of the initial norm is null
RESIDUAL_NULL_RATIO = 1e-12

NIPALS_TOL = 1e-9
NIPALS_MAX_ITER = 500


@dataclass
class FitDiagnostics:
    """
    Per component bookkeeping of an iterative fit.

    Attributes
    ----------
    iterations : list of int
        Iterations spent on each component (by the winning restart where restarts apply).
    converged : list of bool
        Whether each component met its convergence criterion.
    residuals : list of float
        The achieved convergence measure for each component.
    objective_traces : list of list of float
        Objective value after each accepted step, one trace per component.
    restarts : list of int
        The winning restart index for each component.
    messages : list of str
        Warnings raised during the fit, recorded so they can be inspected without catching them.
    """

    iterations: List[int] = field(default_factory=list)
    converged: List[bool] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    objective_traces: List[List[float]] = field(default_factory=list)
    restarts: List[int] = field(default_factory=list)
    messages: List[str] = field(default_factory=list)

    def warn(self, message: str, category: Type[Warning] = FitWarning, stacklevel: int = 3):
        logger.warning(message)
        self.messages.append(message)
        warnings.warn(message, category, stacklevel=stacklevel)

    @property
    def stopped_early(self) -> bool:
        return any(m.startswith("Stopped after") for m in self.messages)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": list(self.iterations),
            "converged": list(self.converged),
            "residuals": list(self.residuals),
            "objective_traces": [list(t) for t in self.objective_traces],
            "restarts": list(self.restarts),
            "messages": list(self.messages),
        }

    @classmethod
    def from_dict(cls, state: Dict[str, Any]) -> "FitDiagnostics":
        return cls(**{k: list(v) for k, v in state.items() if k in cls.__dataclass_fields__})


class ProjectionModel(object):
    """
    Behaviour shared by models whose scores are computed component-wise on deflated inputs:
    ``t_h = E_h w_h`` followed by ``E_{h+1} = E_h - t_h l_h^T`` with loadings ``l_h``.

    Subclasses provide ``W``, ``loadings`` and ``T``.
    """

    W: np.ndarray
    T: np.ndarray
    stats: Optional[CenteringStats]

    @property
    def loadings(self) -> np.ndarray:
        raise NotImplementedError()

    @property
    def k(self) -> int:
        return self.W.shape[1]

    @property
    def n_features(self) -> int:
        return self.W.shape[0]

    def transform(self, X_new: MatrixLike) -> np.ndarray:
        """
        Project ``X_new``, which must be preprocessed with the training statistics.

        Returns
        -------
        np.ndarray
            ``n' x k`` scores. The training matrix maps onto :attr:`T`.
        """
        E = np.array(matrix_values(X_new, "X_new"), copy=True)
        if E.shape[1] != self.n_features:
            raise DimensionMismatchError(f"Model expects {self.n_features} columns, got {E.shape[1]}")
        scores = np.zeros((E.shape[0], self.k))
        loadings = self.loadings
        for h in range(self.k):
            t = E @ self.W[:, h]
            scores[:, h] = t
            E -= np.outer(t, loadings[:, h])
        return scores

    def reconstruct(self, scores: np.ndarray) -> np.ndarray:
        """Map scores back into the centered input space, ``scores @ loadings.T``."""
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim == 1:
            scores = scores[None, :]
        if scores.shape[1] != self.k:
            raise DimensionMismatchError(f"Model has {self.k} components, got scores with {scores.shape[1]}")
        return scores @ self.loadings.T

    def truncate(self, k: int):
        """A copy of the model keeping only its first ``k`` components."""
        raise NotImplementedError()


@dataclass(frozen=True, eq=False)
class PlsModel(ProjectionModel):
    """
    A fitted standard PLS model.

    Attributes
    ----------
    W : np.ndarray
        ``d x k`` unit weight vectors.
    P : np.ndarray
        ``d x k`` input loadings.
    C : np.ndarray
        ``m x k`` unit target weights.
    B_coeffs : np.ndarray
        The inner regression scalars ``b_h``.
    T, U : np.ndarray
        ``n x k`` input and target scores of the training data.
    """

    W: np.ndarray
    P: np.ndarray
    C: np.ndarray
    B_coeffs: np.ndarray
    T: np.ndarray
    U: np.ndarray
    stats: Optional[CenteringStats] = field(default=None, repr=False)
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics, repr=False)

    @property
    def loadings(self) -> np.ndarray:
        return self.P

    def truncate(self, k: int) -> "PlsModel":
        return PlsModel(
            self.W[:, :k], self.P[:, :k], self.C[:, :k], self.B_coeffs[:k], self.T[:, :k], self.U[:, :k],
            self.stats, self.diagnostics)

    def __repr__(self):
        return f"{self.__class__.__name__}(k={self.k}, d={self.n_features})"


def _empty_scores(n: int, d: int, m: int):
    return np.zeros((d, 0)), np.zeros((d, 0)), np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)), np.zeros((n, 0))


def check_component_count(k: int, n: int, d: int):
    if k < 0 or k > min(n, d):
        raise DimensionMismatchError(f"k must lie in [0, {min(n, d)}], got {k}")


def nipals_fit(X: MatrixLike, Y: MatrixLike, k: int, tol: float = NIPALS_TOL,
               max_iter: int = NIPALS_MAX_ITER) -> PlsModel:
    """
    Fit ``k`` PLS components with the NIPALS algorithm.

    Each component alternates ``w = E^T u / u^T u`` (normalized), ``t = E w``,
    ``c = F^T t / t^T t`` (normalized) and ``u = F c`` until the relative change of ``t``
    falls to ``tol``. The inputs are then deflated with ``p = E^T t / t^T t`` and
    ``b = u^T t / t^T t``. Each weight is sign-canonicalized so its first non-zero entry is positive.

    Fitting stops early, with a :class:`~.FitWarning`, when the residual of ``X`` becomes
    numerically null or a component has zero variance.

    Parameters
    ----------
    X, Y : :class:`~.CenteredMatrix` or np.ndarray
        Column-centered inputs with the same row count.
    k : int
        The number of components, at most ``min(n, d)``.
    tol : float
        Relative convergence threshold on the scores.
    max_iter : int
        Iteration budget per component. Running out issues a :class:`~.ConvergenceWarning`.

    Returns
    -------
    :class:`PlsModel`
    """
    stats = getattr(X, "stats", None)
    E = np.array(require_centered(X, "X"), copy=True)
    F = np.array(require_centered(Y, "Y"), copy=True)
    check_same_rows(E, F, names=("X", "Y"))
    n, d = E.shape
    m = F.shape[1]
    check_component_count(k, n, d)
    if tol <= 0 or max_iter < 1:
        raise ValueError(f"tol and max_iter must be positive, got {tol} and {max_iter}")

    W, P, C, B, T, U = ([] for _ in range(6))
    diagnostics = FitDiagnostics()
    initial_norm = np.linalg.norm(E)
    initial_target_norm = np.linalg.norm(F)
    for h in range(k):
        if np.linalg.norm(E) <= RESIDUAL_NULL_RATIO * initial_norm:
            diagnostics.warn(f"Stopped after {h} components: the residual of X is null")
            break
        if np.linalg.norm(F) <= RESIDUAL_NULL_RATIO * initial_target_norm:
            diagnostics.warn(f"Stopped after {h} components: the residual of Y is null")
            break
        u = F[:, int(np.argmax((F ** 2).sum(axis=0)))].copy()
        t_old = None
        converged = False
        change = np.inf
        w_norm = tt = 1.0
        for iteration in range(1, max_iter + 1):
            w = E.T @ u / (u @ u)
            w_norm = np.linalg.norm(w)
            if w_norm == 0:
                break
            w /= w_norm
            t = E @ w
            tt = t @ t
            if tt == 0:
                break
            c = F.T @ t / tt
            c /= np.linalg.norm(c)
            u = F @ c
            if t_old is not None:
                change = np.linalg.norm(t - t_old) / np.linalg.norm(t)
                if change <= tol:
                    converged = True
                    break
            t_old = t
        if w_norm == 0 or tt == 0:
            diagnostics.warn(f"Stopped after {h} components: component {h + 1} has zero variance")
            break
        if not converged:
            diagnostics.warn(
                f"Component {h + 1} did not converge in {max_iter} iterations (change {change:.3g})",
                ConvergenceWarning)

        sign = canonical_sign(w, atol=1e-10)
        w, t, c, u = sign * w, sign * t, sign * c, sign * u
        p = E.T @ t / tt
        b = (u @ t) / tt
        E -= np.outer(t, p)
        F -= b * np.outer(t, c)

        W.append(w)
        P.append(p)
        C.append(c)
        B.append(b)
        T.append(t)
        U.append(u)
        diagnostics.iterations.append(iteration)
        diagnostics.converged.append(converged)
        diagnostics.residuals.append(float(change) if np.isfinite(change) else 0.0)
        logger.debug("NIPALS component %d: %d iterations, b=%0.4g", h + 1, iteration, b)

    if not W:
        W, P, C, B, T, U = _empty_scores(n, d, m)
        return PlsModel(W, P, C, B, T, U, stats, diagnostics)
    return PlsModel(
        np.column_stack(W), np.column_stack(P), np.column_stack(C), np.array(B),
        np.column_stack(T), np.column_stack(U), stats, diagnostics)


def transform(model: ProjectionModel, X_new: MatrixLike) -> np.ndarray:
    """Scores of ``X_new`` under ``model``. See :meth:`ProjectionModel.transform`."""
    return model.transform(X_new)


def reconstruct(model: ProjectionModel, scores: np.ndarray) -> np.ndarray:
    """Centered-space reconstruction of ``scores``. See :meth:`ProjectionModel.reconstruct`."""
    return model.reconstruct(scores)


def power_iteration(M: np.ndarray, tol: float = 1e-10, max_iter: int = 10000,
                    seed: int = 0) -> Tuple[np.ndarray, float]:
    """
    The leading eigenpair of a symmetric positive semi-definite matrix.

    The iteration starts from the first canonical basis vector and is repeated from a
    random start drawn under ``seed``; the pair with the larger eigenvalue is returned, so
    a start orthogonal to the leading eigenspace cannot hide it.

    Returns
    -------
    eigvec : np.ndarray
        Unit vector ``v`` with ``||M v - lambda v|| <= tol * lambda``.
    eigval : float

    Raises
    ------
    DimensionMismatchError
        When ``M`` is not square.
    PreconditionError
        When ``M`` is not symmetric within ``1e-10``.
    ConvergenceError
        When the residual criterion is not met after ``max_iter`` iterations.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatchError(f"Expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    asym = float(np.abs(M - M.T).max(initial=0.0))
    if asym > 1e-10 * scale:
        raise PreconditionError("power_iteration requires a symmetric matrix", asymmetry=asym)
    d = M.shape[0]

    def run(v):
        v = v / np.linalg.norm(v)
        residual = np.inf
        for iteration in range(1, max_iter + 1):
            Mv = M @ v
            lam = float(v @ Mv)
            residual = float(np.linalg.norm(Mv - lam * v))
            if residual <= tol * max(lam, 0.0):
                return v, max(lam, 0.0), residual, iteration
            norm = np.linalg.norm(Mv)
            if norm == 0:
                return v, 0.0, 0.0, iteration
            v = Mv / norm
        raise ConvergenceError(
            f"Power iteration did not converge in {max_iter} iterations", residual=residual, iterations=max_iter)

    start = np.zeros(d)
    start[0] = 1.0
    best = run(start)
    other = run(np.random.default_rng(seed).standard_normal(d))
    if other[1] > best[1] * (1 + 1e-12):
        best = other
    v, lam, residual, iteration = best
    v = canonical_sign(v, atol=1e-12) * v
    logger.debug("Power iteration: lambda=%0.6g residual=%0.3g after %d iterations", lam, residual, iteration)
    return v, lam


def top_features(model: ProjectionModel, feature_names: Sequence[str],
                 n: int = 5) -> List[List[Tuple[str, float]]]:
    """
    For each component, the ``n`` input features with the largest absolute weight.

    Returns
    -------
    list of list of (name, weight)
    """
    if len(feature_names) != model.n_features:
        raise DimensionMismatchError(f"Expected {model.n_features} feature names, got {len(feature_names)}")
    ranking = []
    for h in range(model.k):
        w = model.W[:, h]
        order = np.argsort(-np.abs(w), kind="stable")[:n]
        ranking.append([(feature_names[i], float(w[i])) for i in order])
    return ranking
