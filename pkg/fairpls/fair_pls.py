"""
Fair Partial Least Squares.

Components maximize the squared covariance of the scores with the target minus ``eta``
times their squared covariance with the sensitive attribute:

.. math::

    g(w) = \\frac{1}{n^2} \\left( \\lVert Y^T X_h w \\rVert^2 - \\eta \\lVert S^T X_h w \\rVert^2 \\right)

over unit vectors ``w``, one component at a time with PLS deflation of ``X``. The
equality-of-odds variant replaces ``S`` by its residual after regressing it on ``Y``.
"""
import enum
import logging

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .encoding import CenteringStats, MatrixLike, matrix_values, require_centered
from .optimize import GdParams, best_of_starts, central_difference, unit_normalize
from .pls import (
    RESIDUAL_NULL_RATIO, FitDiagnostics, PlsModel, ProjectionModel, check_component_count, nipals_fit)
from .utils import (
    ConvergenceWarning, DegenerateInputError, DimensionMismatchError, PreconditionError,
    SingularMatrixError, canonical_sign, check_same_rows)

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

WARM_START_ITERATIONS = 25


class FairnessMode(enum.Enum):
    demographic_parity = "demographic-parity"
    equality_of_odds = "equality-of-odds"


@dataclass(frozen=True, eq=False)
class FairPlsModel(ProjectionModel):
    """
    A fitted Fair PLS model.

    Attributes
    ----------
    W : np.ndarray
        ``d x k`` unit weight vectors.
    Gamma : np.ndarray
        ``d x k`` loadings used for deflation and reconstruction.
    T : np.ndarray
        ``n x k`` training scores.
    eta : float
        The fairness trade-off.
    mode : :class:`FairnessMode`
    ridge : float
        The ridge used to condition on ``Y`` in equality-of-odds mode.
    objective : np.ndarray
        The final objective value of each component.
    """

    W: np.ndarray
    Gamma: np.ndarray
    T: np.ndarray
    eta: float
    mode: FairnessMode = FairnessMode.demographic_parity
    ridge: float = 0.0
    objective: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stats: Optional[CenteringStats] = field(default=None, repr=False)
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics, repr=False)

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")

    @property
    def loadings(self) -> np.ndarray:
        return self.Gamma

    def truncate(self, k: int) -> "FairPlsModel":
        return FairPlsModel(
            self.W[:, :k], self.Gamma[:, :k], self.T[:, :k], self.eta, self.mode, self.ridge,
            self.objective[:k], self.stats, self.diagnostics)

    def __repr__(self):
        return f"{self.__class__.__name__}(k={self.k}, d={self.n_features}, eta={self.eta}, mode={self.mode.value})"


def _check_inputs(X: np.ndarray, Y: np.ndarray, S: np.ndarray):
    check_same_rows(X, Y, S, names=("X", "Y", "S"))


def fpls_objective_grad(w: np.ndarray, X_h: MatrixLike, Y: MatrixLike, S: MatrixLike,
                        eta: float) -> Tuple[float, np.ndarray]:
    """
    The Fair PLS objective and its gradient at ``w``.

    Computed with matrix-vector products only, never forming ``n x n`` or ``d x d`` matrices.

    Returns
    -------
    value : float
        ``(||Y^T X w||^2 - eta ||S^T X w||^2) / n^2``
    grad : np.ndarray
        ``2 (X^T Y Y^T X w - eta X^T S S^T X w) / n^2``
    """
    X = matrix_values(X_h, "X_h")
    Y = matrix_values(Y, "Y")
    S = matrix_values(S, "S")
    _check_inputs(X, Y, S)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (X.shape[1],):
        raise DimensionMismatchError(f"w must have {X.shape[1]} entries, got shape {w.shape}")
    n2 = X.shape[0] ** 2
    xw = X @ w
    a = Y.T @ xw
    b = S.T @ xw
    value = (a @ a - eta * (b @ b)) / n2
    grad = 2.0 * (X.T @ (Y @ a) - eta * (X.T @ (S @ b))) / n2
    return float(value), grad


def conditional_residual(S: MatrixLike, Y: MatrixLike, ridge: float = 0.0) -> np.ndarray:
    """
    ``S - Y (C_YY + ridge I)^{-1} C_YS``, the part of ``S`` not linearly explained by ``Y``.

    Raises
    ------
    SingularMatrixError
        When ``C_YY + ridge I`` is singular.
    """
    S = matrix_values(S, "S")
    Y = matrix_values(Y, "Y")
    check_same_rows(S, Y, names=("S", "Y"))
    if ridge < 0:
        raise ValueError(f"ridge must be non-negative, got {ridge}")
    n = Y.shape[0]
    C_yy = Y.T @ Y / n + ridge * np.eye(Y.shape[1])
    C_ys = Y.T @ S / n
    eigvals = linalg.eigvalsh(C_yy)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], np.finfo(float).tiny):
        raise SingularMatrixError(
            f"The target covariance is singular (smallest eigenvalue {eigvals[0]:.3g}), use a positive ridge")
    return S - Y @ linalg.solve(C_yy, C_ys, assume_a="pos")


def conditional_cross_cov(Xw_scores: np.ndarray, S: MatrixLike, Y: MatrixLike, ridge: float = 0.0) -> np.ndarray:
    """
    The empirical conditional cross-covariance ``C_{Xw,S} - C_{Xw,Y} (C_YY + ridge I)^{-1} C_{Y,S}``.

    Parameters
    ----------
    Xw_scores : np.ndarray
        An ``n`` vector, or an ``n x k`` matrix of scores.

    Returns
    -------
    np.ndarray
        ``k x p`` where ``p`` is the number of columns of ``S``.
    """
    scores = np.asarray(Xw_scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[:, None]
    residual = conditional_residual(S, Y, ridge)
    check_same_rows(scores, residual, names=("scores", "S"))
    return scores.T @ residual / scores.shape[0]


def eo_objective_grad(w: np.ndarray, X_h: MatrixLike, Y: MatrixLike, S: MatrixLike, eta: float,
                      ridge: float = 0.0) -> Tuple[float, np.ndarray]:
    """
    The equality-of-odds objective ``(||Y^T X w||^2 / n^2) - eta ||C_{Xw,S|Y}||^2`` and its gradient.
    """
    return fpls_objective_grad(w, X_h, Y, conditional_residual(S, Y, ridge), eta)


def _warm_start(E: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """A short NIPALS inner loop on the current residual."""
    u = Y[:, int(np.argmax((Y ** 2).sum(axis=0)))]
    w = np.zeros(E.shape[1])
    for _ in range(WARM_START_ITERATIONS):
        w = E.T @ u
        norm = np.linalg.norm(w)
        if norm == 0:
            break
        w /= norm
        t = E @ w
        c = Y.T @ t
        c_norm = np.linalg.norm(c)
        if c_norm == 0:
            break
        u = Y @ (c / c_norm)
    return w


def _starting_points(E: np.ndarray, Y: np.ndarray, gd: GdParams, h: int) -> List[np.ndarray]:
    d = E.shape[1]
    e1 = np.zeros(d)
    e1[0] = 1.0
    starts = [e1]
    if gd.restarts > 1:
        warm = _warm_start(E, Y)
        starts.append(warm if np.linalg.norm(warm) > 0 else e1.copy())
    rng = np.random.default_rng(gd.seed + h)
    while len(starts) < gd.restarts:
        starts.append(rng.standard_normal(d))
    return starts


def _ascent_fit(X: MatrixLike, Y: MatrixLike, S: MatrixLike, k: int, eta: float, gd: GdParams,
                mode: FairnessMode, ridge: float = 0.0, finite_difference: bool = False) -> FairPlsModel:
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    stats = getattr(X, "stats", None)
    E = np.array(require_centered(X, "X"), copy=True)
    Yv = require_centered(Y, "Y")
    Sv = require_centered(S, "S")
    _check_inputs(E, Yv, Sv)
    n, d = E.shape
    check_component_count(k, n, d)
    if mode == FairnessMode.equality_of_odds:
        Sv = conditional_residual(Sv, Yv, ridge)

    diagnostics = FitDiagnostics()
    W, G, T, values = [], [], [], []
    initial_norm = np.linalg.norm(E)
    n2 = float(n * n)
    for h in range(k):
        if np.linalg.norm(E) <= RESIDUAL_NULL_RATIO * initial_norm:
            diagnostics.warn(f"Stopped after {h} components: the residual of X is null")
            break
        EtY = E.T @ Yv
        EtS = E.T @ Sv
        scale = (np.sum(EtY ** 2) + eta * np.sum(EtS ** 2)) / n2
        if scale <= 0:
            diagnostics.warn(f"Stopped after {h} components: the residual of X is uncorrelated with Y and S")
            break

        def objective(w, E=E):
            if finite_difference:
                value = fpls_objective_grad(w, E, Yv, Sv, eta)[0]
                return value, central_difference(lambda v: fpls_objective_grad(v, E, Yv, Sv, eta)[0], w)
            return fpls_objective_grad(w, E, Yv, Sv, eta)

        index, result = best_of_starts(
            objective, unit_normalize, _starting_points(E, Yv, gd, h), gd, scale)
        w = result.x
        if not result.converged:
            diagnostics.warn(
                f"Component {h + 1} did not converge in {gd.max_iter} iterations (step {result.residual:.3g})",
                ConvergenceWarning)
        w = canonical_sign(w, atol=1e-10) * w
        t = E @ w
        tt = t @ t
        if tt <= (RESIDUAL_NULL_RATIO * initial_norm) ** 2:
            diagnostics.warn(f"Stopped after {h} components: component {h + 1} has zero variance")
            break
        gamma = E.T @ t / tt
        E -= np.outer(t, gamma)

        W.append(w)
        G.append(gamma)
        T.append(t)
        values.append(result.value)
        diagnostics.iterations.append(result.iterations)
        diagnostics.converged.append(result.converged)
        diagnostics.residuals.append(result.residual)
        diagnostics.objective_traces.append(result.trace)
        diagnostics.restarts.append(index)
        logger.debug(
            "Fair PLS component %d (eta=%g): objective %0.8g from start %d after %d iterations",
            h + 1, eta, result.value, index, result.iterations)

    if W:
        return FairPlsModel(
            np.column_stack(W), np.column_stack(G), np.column_stack(T), float(eta), mode, ridge,
            np.array(values), stats, diagnostics)
    return FairPlsModel(
        np.zeros((d, 0)), np.zeros((d, 0)), np.zeros((n, 0)), float(eta), mode, ridge, np.zeros(0), stats,
        diagnostics)


def fair_pls_fit(X: MatrixLike, Y: MatrixLike, S: MatrixLike, k: int, eta: float,
                 gd: Optional[GdParams] = None) -> FairPlsModel:
    """
    Fit ``k`` Fair PLS components by projected gradient ascent on the unit sphere.

    For each component the ascent is run from ``gd.restarts`` starting points (the first
    basis vector, a NIPALS warm start, then random vectors seeded by ``gd.seed + h``) and the
    best final objective wins. Scores are ``t_h = X_h w_h``, loadings
    ``gamma_h = X_h^T t_h / t_h^T t_h``, and ``X_{h+1} = X_h - t_h gamma_h^T``.

    Parameters
    ----------
    X, Y, S : :class:`~.CenteredMatrix` or np.ndarray
        Column-centered inputs, target and sensitive attribute with a common row count.
    k : int
    eta : float
        Non-negative fairness trade-off. ``eta=0`` is standard PLS.
    gd : :class:`~.GdParams`, optional

    Returns
    -------
    :class:`FairPlsModel`
        Components that fail to converge are kept and reported through a
        :class:`~.ConvergenceWarning` and the model's diagnostics.
    """
    return _ascent_fit(X, Y, S, k, eta, gd or GdParams(), FairnessMode.demographic_parity)


def eo_fair_pls_fit(X: MatrixLike, Y: MatrixLike, S: MatrixLike, k: int, eta: float,
                    gd: Optional[GdParams] = None, ridge: float = 0.0,
                    finite_difference: bool = False) -> FairPlsModel:
    """
    Fit Fair PLS with the equality-of-odds penalty ``||C_{X_h w, S | Y}||^2``.

    The conditional cross-covariance is linear in ``w``, so the penalty is the Fair PLS
    penalty applied to the residual of ``S`` after its ridge regression on ``Y``.
    ``finite_difference`` replaces the analytic gradient by central differences, for
    validation only.
    """
    return _ascent_fit(
        X, Y, S, k, eta, gd or GdParams(), FairnessMode.equality_of_odds, ridge, finite_difference)


def eigen_regime_bound(Y: MatrixLike, S: MatrixLike) -> Tuple[float, float, float]:
    """
    The largest ``eta`` for which the eigen regime applies.

    Returns
    -------
    bound : float
        ``sigma_min / sigma_max``, infinite when ``S`` is null.
    sigma_min : float
        The smallest non-zero eigenvalue of ``Y Y^T``.
    sigma_max : float
        The largest eigenvalue of ``S S^T``.
    """
    Y = matrix_values(Y, "Y")
    S = matrix_values(S, "S")
    y_eig = linalg.eigvalsh(Y.T @ Y)
    s_eig = linalg.eigvalsh(S.T @ S)
    nonzero = y_eig[y_eig > 1e-10 * max(y_eig[-1], np.finfo(float).tiny)]
    if nonzero.size == 0:
        raise DegenerateInputError("Y is null")
    sigma_min = float(nonzero[0])
    sigma_max = float(max(s_eig[-1], 0.0))
    bound = np.inf if sigma_max == 0 else sigma_min / sigma_max
    return bound, sigma_min, sigma_max


def _factor_fairness_form(Y: np.ndarray, S: np.ndarray, eta: float) -> np.ndarray:
    """
    ``M`` with ``M M^T = Y Y^T - eta S S^T``, computed from a thin QR factorization of
    ``[Y, S]`` so no ``n x n`` matrix is formed.

    Raises
    ------
    PreconditionError
        When the form has an eigenvalue below ``-1e-10`` relative to its scale.
    """
    Z = np.hstack([Y, S])
    Q, R = linalg.qr(Z, mode="economic")
    J = np.concatenate([np.ones(Y.shape[1]), -eta * np.ones(S.shape[1])])
    core = (R * J) @ R.T
    core = (core + core.T) / 2
    D, U = linalg.eigh(core)
    scale = max(1.0, float(np.abs(D).max(initial=0.0)))
    if D[0] < -1e-10 * scale:
        raise PreconditionError(
            "Y Y^T - eta S S^T has a negative eigenvalue", smallest_eigenvalue=float(D[0]), eta=eta)
    return Q @ (U * np.sqrt(np.clip(D, 0.0, None)))


def eigen_regime_fit(X: MatrixLike, Y: MatrixLike, S: MatrixLike, k: int, eta: float) -> FairPlsModel:
    """
    Fit Fair PLS in closed form: each weight is the leading eigenvector of
    ``X_h^T M M^T X_h`` with ``M M^T = Y Y^T - eta S S^T``, followed by the same deflation
    as :func:`fair_pls_fit`.

    Raises
    ------
    PreconditionError
        When ``eta`` exceeds :func:`eigen_regime_bound` or the factored form is not positive
        semi-definite. Both eigenvalues are reported.
    """
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    stats = getattr(X, "stats", None)
    E = np.array(require_centered(X, "X"), copy=True)
    Yv = require_centered(Y, "Y")
    Sv = require_centered(S, "S")
    _check_inputs(E, Yv, Sv)
    n, d = E.shape
    check_component_count(k, n, d)
    bound, sigma_min, sigma_max = eigen_regime_bound(Yv, Sv)
    if eta > bound:
        raise PreconditionError(
            f"eta={eta} exceeds the eigen regime bound {bound:.6g}", eta=eta, sigma_min_y=sigma_min,
            sigma_max_s=sigma_max, bound=bound)
    M = _factor_fairness_form(Yv, Sv, eta)

    diagnostics = FitDiagnostics()
    W, G, T, values = [], [], [], []
    initial_norm = np.linalg.norm(E)
    for h in range(k):
        if np.linalg.norm(E) <= RESIDUAL_NULL_RATIO * initial_norm:
            diagnostics.warn(f"Stopped after {h} components: the residual of X is null")
            break
        EtM = E.T @ M
        lam, vec = linalg.eigh(EtM @ EtM.T, subset_by_index=[d - 1, d - 1])
        w = vec[:, 0]
        w = canonical_sign(w, atol=1e-10) * w
        t = E @ w
        tt = t @ t
        if tt <= (RESIDUAL_NULL_RATIO * initial_norm) ** 2:
            diagnostics.warn(f"Stopped after {h} components: component {h + 1} has zero variance")
            break
        gamma = E.T @ t / tt
        E -= np.outer(t, gamma)
        W.append(w)
        G.append(gamma)
        T.append(t)
        values.append(float(lam[0]) / (n * n))
        diagnostics.iterations.append(0)
        diagnostics.converged.append(True)
        diagnostics.residuals.append(0.0)
        diagnostics.objective_traces.append([values[-1]])
        diagnostics.restarts.append(0)

    if W:
        return FairPlsModel(
            np.column_stack(W), np.column_stack(G), np.column_stack(T), float(eta),
            FairnessMode.demographic_parity, 0.0, np.array(values), stats, diagnostics)
    return FairPlsModel(
        np.zeros((d, 0)), np.zeros((d, 0)), np.zeros((n, 0)), float(eta), FairnessMode.demographic_parity, 0.0,
        np.zeros(0), stats, diagnostics)


def correlation_ratio(t: np.ndarray, groups: Sequence) -> float:
    """
    The correlation ratio of a score with a grouping: the size-weighted variance of the
    group means over the total variance of ``t``.

    Raises
    ------
    DegenerateInputError
        When fewer than two groups are present or ``t`` is constant.
    """
    t = np.asarray(t, dtype=np.float64).ravel()
    groups = np.asarray(groups)
    if groups.shape[0] != t.shape[0]:
        raise DimensionMismatchError(f"Got {t.shape[0]} scores and {groups.shape[0]} group labels")
    levels, inverse, counts = np.unique(groups, return_inverse=True, return_counts=True)
    if levels.size < 2:
        raise DegenerateInputError("The correlation ratio needs at least two groups")
    mean = t.mean()
    total = float(np.sum((t - mean) ** 2))
    if total <= 1e-24 * t.shape[0] * max(1.0, float(np.max(t ** 2))):
        raise DegenerateInputError("The scores have zero variance")
    group_means = np.bincount(inverse, weights=t) / counts
    between = float(np.sum(counts * (group_means - mean) ** 2))
    return float(min(max(between / total, 0.0), 1.0))


@dataclass(frozen=True, eq=False)
class VanillaSelection:
    """
    Standard PLS components filtered by their correlation ratio with a grouping.

    Attributes
    ----------
    model : :class:`~.PlsModel`
    ratios : np.ndarray
        The correlation ratio of each component.
    mask : np.ndarray
        ``True`` for components kept, those with a ratio below ``tau``.
    tau : float
    """

    model: PlsModel
    ratios: np.ndarray
    mask: np.ndarray
    tau: float

    @property
    def scores(self) -> np.ndarray:
        return self.model.T[:, self.mask]

    @property
    def n_selected(self) -> int:
        return int(self.mask.sum())

    def transform(self, X_new: MatrixLike) -> np.ndarray:
        return self.model.transform(X_new)[:, self.mask]

    def reconstruct(self, scores: np.ndarray) -> np.ndarray:
        return np.asarray(scores) @ self.model.P[:, self.mask].T


def vanilla_fair_pls(X: MatrixLike, Y: MatrixLike, S: Sequence, k: int, tau: float) -> VanillaSelection:
    """
    Fit standard PLS and keep the components whose correlation ratio with the grouping
    ``S`` is below ``tau``. An empty selection is a valid result.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    groups = np.asarray(S)
    if groups.ndim == 2:
        if groups.shape[1] != 1:
            raise DimensionMismatchError("The grouping must be a single column")
        groups = groups[:, 0]
    if np.unique(groups).size < 2:
        raise DegenerateInputError("The grouping needs at least two levels")
    model = nipals_fit(X, Y, k)
    ratios = np.array([correlation_ratio(model.T[:, h], groups) for h in range(model.k)])
    mask = ratios < tau
    logger.debug("Vanilla selection at tau=%g keeps %d of %d components", tau, int(mask.sum()), model.k)
    return VanillaSelection(model, ratios, mask, tau)
