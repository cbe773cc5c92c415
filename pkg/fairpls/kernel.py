"""
Kernel Fair PLS.

The representation is learned in the dual: each component is a coefficient vector
``alpha`` over the training rows, its scores are ``t = K_h alpha`` with the centered and
deflated input Gram matrix ``K_h``, and the fairness penalty is the empirical HSIC between
the scores and the sensitive attribute's centered Gram matrix.
"""
import enum
import hashlib
import logging

from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
from scipy.spatial import distance

from .encoding import CenteringStats, MatrixLike, matrix_values, require_centered
from .optimize import GdParams, best_of_starts
from .pls import RESIDUAL_NULL_RATIO, FitDiagnostics
from .utils import (
    CenteringError, ConfigurationError, ConvergenceWarning, DegenerateInputError, DimensionMismatchError,
    PreconditionError, as_2d, check_same_rows)

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

MEDIAN_SUBSAMPLE = 2000
MEDIAN_SEED = 0
MAX_DENSE_ROWS = 20000


class KernelKind(enum.Enum):
    linear = "linear"
    rbf = "rbf"


MEDIAN = "median"


@dataclass(frozen=True)
class KernelSpec:
    """
    A kernel function.

    Attributes
    ----------
    kind : :class:`KernelKind`
    bandwidth : float or ``"median"``
        The RBF width ``sigma`` in ``exp(-r^2 / (2 sigma^2))``. ``"median"`` is resolved
        against the training rows with :func:`median_heuristic`.
    """

    kind: KernelKind = KernelKind.linear
    bandwidth: Union[float, str, None] = None

    def __post_init__(self):
        if self.kind == KernelKind.rbf:
            if self.bandwidth is None:
                object.__setattr__(self, "bandwidth", MEDIAN)
            elif self.bandwidth != MEDIAN and not float(self.bandwidth) > 0:
                raise ConfigurationError(f"RBF bandwidth must be positive, got {self.bandwidth}")

    @property
    def resolved(self) -> bool:
        return self.kind == KernelKind.linear or self.bandwidth != MEDIAN

    def resolve(self, X: np.ndarray) -> "KernelSpec":
        if self.resolved:
            return self
        return KernelSpec(self.kind, median_heuristic(X))

    def to_dict(self) -> Dict[str, Any]:
        state: Dict[str, Any] = {"kind": self.kind.value}
        if self.kind == KernelKind.rbf:
            state["bandwidth"] = self.bandwidth
        return state

    @classmethod
    def from_dict(cls, state: Union[str, Mapping[str, Any]]) -> "KernelSpec":
        if isinstance(state, str):
            state = {"kind": state}
        try:
            kind = KernelKind(state.get("kind", "linear"))
        except ValueError as err:
            raise ConfigurationError(f"Unknown kernel {state!r}") from err
        return cls(kind, state.get("bandwidth"))

    def __str__(self):
        if self.kind == KernelKind.linear:
            return "linear"
        return f"rbf({self.bandwidth})"


def gram(Xa: Any, Xb: Any, kernel: KernelSpec) -> np.ndarray:
    """
    The ``n_a x n_b`` matrix of kernel evaluations ``k(x_i, x_j)``.

    The result is exactly symmetric when ``Xa`` and ``Xb`` are the same object.
    """
    same = Xa is Xb
    A = as_2d(Xa, "Xa")
    B = A if same else as_2d(Xb, "Xb")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatchError(f"Feature dimensions differ: {A.shape[1]} and {B.shape[1]}")
    if not kernel.resolved:
        raise ConfigurationError("The RBF bandwidth must be resolved before building a Gram matrix")
    if kernel.kind == KernelKind.linear:
        K = A @ B.T
    else:
        sigma = float(kernel.bandwidth)
        K = np.exp(-distance.cdist(A, B, "sqeuclidean") / (2.0 * sigma ** 2))
    if same:
        K = (K + K.T) / 2.0
    return K


def median_heuristic(X: Any) -> float:
    """
    The median pairwise Euclidean distance between rows of ``X``.

    Above ``MEDIAN_SUBSAMPLE`` rows, a fixed-seed subsample of that many rows is used.

    Raises
    ------
    DegenerateInputError
        With fewer than two rows, or when all rows are identical.
    """
    X = as_2d(X, "X")
    n = X.shape[0]
    if n < 2:
        raise DegenerateInputError("The median heuristic needs at least two rows")
    if n > MEDIAN_SUBSAMPLE:
        rows = np.random.default_rng(MEDIAN_SEED).choice(n, MEDIAN_SUBSAMPLE, replace=False)
        X = X[np.sort(rows)]
    sigma = float(np.median(distance.pdist(X, "euclidean")))
    if sigma <= 0:
        raise DegenerateInputError("All rows are identical so the median distance is 0, use a linear kernel")
    return sigma


@dataclass(frozen=True, eq=False)
class CenteredGram:
    """
    A doubly centered Gram matrix ``H K H`` with the statistics needed to center
    cross-Gram matrices of new rows against the same training rows.
    """

    values: np.ndarray
    col_means: np.ndarray
    grand_mean: float

    @property
    def n(self) -> int:
        return self.values.shape[0]


def center_gram(K: np.ndarray) -> CenteredGram:
    """
    Double-center a square symmetric Gram matrix, ``K~ = H K H`` with ``H = I - 11^T / n``.

    Raises
    ------
    DimensionMismatchError
        When ``K`` is not square.
    PreconditionError
        When ``K`` is not symmetric within ``1e-10`` relative to its largest entry.
    """
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionMismatchError(f"A Gram matrix must be square, got shape {K.shape}")
    scale = max(1.0, float(np.abs(K).max(initial=0.0)))
    asym = float(np.abs(K - K.T).max(initial=0.0))
    if asym > 1e-10 * scale:
        raise PreconditionError("A Gram matrix must be symmetric", asymmetry=asym)
    col_means = K.mean(axis=0)
    grand = float(col_means.mean())
    Kc = K - col_means[None, :] - col_means[:, None] + grand
    Kc = (Kc + Kc.T) / 2.0
    return CenteredGram(Kc, col_means, grand)


def center_cross_gram(K_new: np.ndarray, centering: CenteredGram) -> np.ndarray:
    """
    Center the ``n' x n`` Gram matrix of new rows against the training rows, in the
    training feature space: ``K_new - 1 m^T - rowmean(K_new) 1^T + g``.
    """
    K_new = as_2d(K_new, "K_new")
    if K_new.shape[1] != centering.col_means.shape[0]:
        raise DimensionMismatchError(
            f"Expected {centering.col_means.shape[0]} training columns, got {K_new.shape[1]}")
    return K_new - centering.col_means[None, :] - K_new.mean(axis=1)[:, None] + centering.grand_mean


def _check_centered_gram(K: np.ndarray, name: str):
    n = K.shape[0]
    bound = 1e-8 * n * max(1.0, float(np.abs(K).max(initial=0.0)))
    if float(np.abs(K.sum(axis=0)).max(initial=0.0)) > bound:
        raise CenteringError(f"{name} is not a centered Gram matrix")


def hsic(Kx: Union[np.ndarray, CenteredGram], Ks: Union[np.ndarray, CenteredGram]) -> float:
    """
    The empirical Hilbert-Schmidt independence criterion of two centered Gram matrices,
    ``trace(K~x K~s) / n^2``.
    """
    Kx = Kx.values if isinstance(Kx, CenteredGram) else np.asarray(Kx, dtype=np.float64)
    Ks = Ks.values if isinstance(Ks, CenteredGram) else np.asarray(Ks, dtype=np.float64)
    if Kx.ndim != 2 or Kx.shape[0] != Kx.shape[1] or Kx.shape != Ks.shape:
        raise DimensionMismatchError(f"Gram matrices must be square and equal sized, got {Kx.shape} and {Ks.shape}")
    _check_centered_gram(Kx, "Kx")
    _check_centered_gram(Ks, "Ks")
    n = Kx.shape[0]
    return float(np.sum(Kx * Ks)) / n ** 2


def deflate_gram(K: np.ndarray, t: np.ndarray) -> np.ndarray:
    """
    ``(I - t^ t^T) K (I - t^ t^T)`` with ``t^ = t / ||t||``, computed without forming the projector.
    """
    t = np.asarray(t, dtype=np.float64).ravel()
    if t.shape[0] != K.shape[0]:
        raise DimensionMismatchError(f"Expected a score vector of length {K.shape[0]}, got {t.shape[0]}")
    norm = np.linalg.norm(t)
    if norm == 0:
        raise DegenerateInputError("Cannot deflate by a zero score vector")
    t_hat = t / norm
    v = K @ t_hat
    D = K - np.outer(t_hat, v) - np.outer(v, t_hat) + (t_hat @ v) * np.outer(t_hat, t_hat)
    return (D + D.T) / 2.0


def fingerprint(X: np.ndarray) -> Tuple[int, int, str]:
    """Rows, columns and the SHA-1 digest of the ``float64`` bytes of ``X``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    return X.shape[0], X.shape[1], hashlib.sha1(X.tobytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class KernelFairPlsModel:
    """
    A fitted Kernel Fair PLS model.

    Attributes
    ----------
    A : np.ndarray
        ``n x k`` dual coefficients, each with ``alpha^T K alpha = 1``.
    T : np.ndarray
        ``n x k`` training scores ``K_h alpha_h``.
    T_hat : np.ndarray
        The training scores normalized to unit length, which define the deflations.
    V : np.ndarray
        ``K_h t^_h / ||t_h||`` per component, used to replay the deflations on new rows.
    X_train : np.ndarray
        The training inputs the Gram matrices were built from.
    centering : :class:`CenteredGram`
        Column means and grand mean of the training input Gram matrix.
    """

    A: np.ndarray
    T: np.ndarray
    T_hat: np.ndarray
    V: np.ndarray
    eta: float
    kernel_X: KernelSpec
    kernel_S: KernelSpec
    X_train: np.ndarray = field(repr=False)
    centering: CenteredGram = field(repr=False)
    objective: np.ndarray = field(default_factory=lambda: np.zeros(0))
    training_fingerprint: Optional[Tuple[int, int, str]] = None
    stats: Optional[CenteringStats] = field(default=None, repr=False)
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics, repr=False)

    def __post_init__(self):
        if self.training_fingerprint is None:
            object.__setattr__(self, "training_fingerprint", fingerprint(self.X_train))

    @property
    def k(self) -> int:
        return self.A.shape[1]

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]

    def verify_training_data(self):
        """
        Check the stored training inputs against the recorded fingerprint.

        Raises
        ------
        PreconditionError
        """
        found = fingerprint(self.X_train)
        if tuple(found) != tuple(self.training_fingerprint):
            raise PreconditionError(
                "The stored training data does not match its fingerprint", expected=list(self.training_fingerprint),
                found=list(found))

    def transform(self, X_new: MatrixLike) -> np.ndarray:
        return kfpls_transform(self, X_new)

    def truncate(self, k: int) -> "KernelFairPlsModel":
        return KernelFairPlsModel(
            self.A[:, :k], self.T[:, :k], self.T_hat[:, :k], self.V[:, :k], self.eta, self.kernel_X,
            self.kernel_S, self.X_train, self.centering, self.objective[:k], self.training_fingerprint, self.stats,
            self.diagnostics)

    def __repr__(self):
        return (f"{self.__class__.__name__}(k={self.k}, n={self.X_train.shape[0]}, eta={self.eta}, "
                f"kernel_X={self.kernel_X}, kernel_S={self.kernel_S})")


def _alpha_starts(Y: np.ndarray, gd: GdParams, h: int):
    n = Y.shape[0]
    e1 = np.zeros(n)
    e1[0] = 1.0
    starts = [e1]
    if gd.restarts > 1:
        starts.append(Y[:, int(np.argmax((Y ** 2).sum(axis=0)))].copy())
    rng = np.random.default_rng(gd.seed + h)
    while len(starts) < gd.restarts:
        starts.append(rng.standard_normal(n))
    return starts


def kfpls_fit(X: MatrixLike, Y: MatrixLike, S_raw: Any, k: int, eta: float,
              kernel_X: Optional[KernelSpec] = None, kernel_S: Optional[KernelSpec] = None,
              gd: Optional[GdParams] = None, allow_large_n: bool = False) -> KernelFairPlsModel:
    """
    Fit ``k`` Kernel Fair PLS components.

    Each component maximizes
    ``(||Y^T K_h alpha||^2 - eta alpha^T K_h K~s K_h alpha) / n^2`` under
    ``alpha^T K alpha = 1`` by projected gradient ascent. Iterates are kept orthogonal to
    the constant vector and to the previous normalized scores, which makes the constraint
    hold for the undeflated Gram matrix too. After each component the input Gram matrix is
    deflated by the normalized scores; the sensitive Gram matrix is never deflated.

    With linear kernels the ascent coincides step for step with :func:`~.fair_pls_fit`
    expressed in the dual.

    Raises
    ------
    ConfigurationError
        When ``n`` exceeds ``MAX_DENSE_ROWS`` and ``allow_large_n`` is not set.
    """
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    gd = gd or GdParams()
    kernel_X = kernel_X or KernelSpec()
    kernel_S = kernel_S or KernelSpec()
    stats = getattr(X, "stats", None)
    Xv = np.array(matrix_values(X, "X"), copy=True)
    Yv = require_centered(Y, "Y")
    Sv = as_2d(S_raw, "S")
    check_same_rows(Xv, Yv, Sv, names=("X", "Y", "S"))
    n = Xv.shape[0]
    if n > MAX_DENSE_ROWS and not allow_large_n:
        raise ConfigurationError(
            f"Kernel Fair PLS builds dense {n}x{n} Gram matrices; pass allow_large_n to permit n > {MAX_DENSE_ROWS}")
    if k < 0 or k > n:
        raise DimensionMismatchError(f"k must lie in [0, {n}], got {k}")

    kernel_X = kernel_X.resolve(Xv)
    kernel_S = kernel_S.resolve(Sv)
    centering = center_gram(gram(Xv, Xv, kernel_X))
    Ks = center_gram(gram(Sv, Sv, kernel_S)).values
    Kh = centering.values.copy()
    initial_norm = np.linalg.norm(Kh)
    n2 = float(n * n)

    diagnostics = FitDiagnostics()
    A, T, T_hat, V, values = [], [], [], [], []
    for h in range(k):
        if np.linalg.norm(Kh) <= RESIDUAL_NULL_RATIO * initial_norm:
            diagnostics.warn(f"Stopped after {h} components: the deflated Gram matrix is null")
            break
        scale = (np.sum(Yv * (Kh @ Yv)) + eta * np.sum(Kh * Ks)) / n2
        if scale <= 0:
            diagnostics.warn(f"Stopped after {h} components: the residual is uncorrelated with Y and S")
            break
        previous = np.column_stack(T_hat) if T_hat else np.zeros((n, 0))

        def retract(alpha, Kh=Kh, previous=previous):
            alpha = alpha - alpha.mean()
            alpha = alpha - previous @ (previous.T @ alpha)
            q = float(alpha @ (Kh @ alpha))
            if q <= 0:
                return alpha
            return alpha / np.sqrt(q)

        def objective(alpha, Kh=Kh):
            t = Kh @ alpha
            yt = Yv.T @ t
            st = Ks @ t
            value = (yt @ yt - eta * (t @ st)) / n2
            return float(value), 2.0 * (Yv @ yt - eta * st) / n2

        def metric(a, b, Kh=Kh):
            diff = a - b
            return float(np.sqrt(max(diff @ (Kh @ diff), 0.0)))

        index, result = best_of_starts(objective, retract, _alpha_starts(Yv, gd, h), gd, scale, metric)
        if not result.converged:
            diagnostics.warn(
                f"Component {h + 1} did not converge in {gd.max_iter} iterations (step {result.residual:.3g})",
                ConvergenceWarning)
        alpha = result.x
        t = Kh @ alpha
        if t[int(np.argmax(np.abs(t)))] < 0:
            alpha, t = -alpha, -t
        tt = float(t @ t)
        if tt <= (RESIDUAL_NULL_RATIO * initial_norm) ** 2:
            diagnostics.warn(f"Stopped after {h} components: component {h + 1} has zero variance")
            break
        norm = np.sqrt(tt)
        t_hat = t / norm
        V.append(Kh @ t_hat / norm)
        Kh = deflate_gram(Kh, t)

        A.append(alpha)
        T.append(t)
        T_hat.append(t_hat)
        values.append(result.value)
        diagnostics.iterations.append(result.iterations)
        diagnostics.converged.append(result.converged)
        diagnostics.residuals.append(result.residual)
        diagnostics.objective_traces.append(result.trace)
        diagnostics.restarts.append(index)
        logger.debug(
            "Kernel Fair PLS component %d (eta=%g): objective %0.8g from start %d after %d iterations",
            h + 1, eta, result.value, index, result.iterations)

    def stack(cols):
        return np.column_stack(cols) if cols else np.zeros((n, 0))

    return KernelFairPlsModel(
        stack(A), stack(T), stack(T_hat), stack(V), float(eta), kernel_X, kernel_S, Xv, centering,
        np.array(values), None, stats, diagnostics)


def kfpls_transform(model: KernelFairPlsModel, X_new: MatrixLike) -> np.ndarray:
    """
    Scores of new rows: the cross-Gram against the training rows, centered with the
    stored training statistics and pushed through the stored deflation sequence.

    Raises
    ------
    DimensionMismatchError
        When the feature dimension differs from the training inputs.
    PreconditionError
        When the stored training inputs no longer match their fingerprint.
    """
    Xn = matrix_values(X_new, "X_new")
    if Xn.shape[1] != model.n_features:
        raise DimensionMismatchError(f"Model expects {model.n_features} columns, got {Xn.shape[1]}")
    model.verify_training_data()
    Kn = center_cross_gram(gram(Xn, model.X_train, model.kernel_X), model.centering)
    scores = np.zeros((Xn.shape[0], model.k))
    for h in range(model.k):
        t_new = Kn @ model.A[:, h]
        scores[:, h] = t_new
        t_hat = model.T_hat[:, h]
        v = model.V[:, h]
        Kn = Kn - np.outer(Kn @ t_hat, t_hat) - np.outer(t_new, v - (v @ t_hat) * t_hat)
    return scores
