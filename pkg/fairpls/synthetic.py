"""Synthetic two-group Gaussian datasets."""
import logging

from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from scipy import linalg

from .dataset import ColumnKind, Dataset
from .recipe import load_bundled_json, validate_document
from .utils import PreconditionError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

N_FEATURES = 7
FEATURE_NAMES = tuple(f"x{i}" for i in range(N_FEATURES))
TARGET_NAME = "y"
SENSITIVE_NAME = "s"

PSD_TOLERANCE = 1e-10

# Rows per group needed to whiten the feature and noise draws together
MIN_EXACT_ROWS = N_FEATURES + 2


def check_psd(matrix: np.ndarray, name: str = "covariance"):
    """
    Verify ``matrix`` is symmetric positive semi-definite within ``PSD_TOLERANCE``.

    Raises
    ------
    PreconditionError
    """
    asym = float(np.abs(matrix - matrix.T).max())
    if asym > PSD_TOLERANCE:
        raise PreconditionError(f"{name} is not symmetric", asymmetry=asym)
    smallest = float(np.linalg.eigvalsh(matrix)[0])
    if smallest < -PSD_TOLERANCE:
        raise PreconditionError(f"{name} is not positive semi-definite", smallest_eigenvalue=smallest)


def _vector(values, name) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (N_FEATURES,):
        raise PreconditionError(f"{name} must have {N_FEATURES} entries", shape=list(arr.shape))
    return arr


def _matrix(values, name) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (N_FEATURES, N_FEATURES):
        raise PreconditionError(f"{name} must be {N_FEATURES}x{N_FEATURES}", shape=list(arr.shape))
    check_psd(arr, name)
    return arr


@dataclass(frozen=True)
class SyntheticParams:
    """
    Parameters of the two-group synthetic dataset.

    Group ``g`` is drawn from ``N(mean_g, cov_g)`` and its target is
    ``target_coeffs_g . x + noise_sd_g * e`` with standard normal ``e``.
    With ``exact_moments`` the draws of each group are whitened so that its sample mean
    and covariance (normalized by ``n_per_group``) equal ``mean_g`` and ``cov_g`` exactly
    and the noise is uncorrelated with the features. The shipped defaults are read from
    ``synthetic.json``.
    """

    n_per_group: int
    mean_0: np.ndarray
    mean_1: np.ndarray
    cov_0: np.ndarray
    cov_1: np.ndarray
    target_coeffs_0: np.ndarray
    target_coeffs_1: np.ndarray
    noise_sd_0: float = 0.5
    noise_sd_1: float = 0.5
    seed: int = 0
    exact_moments: bool = False

    def __post_init__(self):
        if int(self.n_per_group) < 1:
            raise PreconditionError("n_per_group must be positive", n_per_group=self.n_per_group)
        if self.exact_moments and int(self.n_per_group) < MIN_EXACT_ROWS:
            raise PreconditionError(
                f"exact_moments needs at least {MIN_EXACT_ROWS} rows per group", n_per_group=self.n_per_group)
        if self.seed < 0:
            raise PreconditionError("seed must be unsigned", seed=self.seed)
        for name in ("mean_0", "mean_1", "target_coeffs_0", "target_coeffs_1"):
            object.__setattr__(self, name, _vector(getattr(self, name), name))
        for name in ("cov_0", "cov_1"):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))

    def replace(self, **kwargs) -> "SyntheticParams":
        state = self.to_dict()
        state.update(kwargs)
        return self.from_dict(state, validate=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_per_group": int(self.n_per_group),
            "mean_0": self.mean_0.tolist(),
            "mean_1": self.mean_1.tolist(),
            "cov_0": self.cov_0.tolist(),
            "cov_1": self.cov_1.tolist(),
            "target_coeffs_0": self.target_coeffs_0.tolist(),
            "target_coeffs_1": self.target_coeffs_1.tolist(),
            "noise_sd_0": self.noise_sd_0,
            "noise_sd_1": self.noise_sd_1,
            "seed": int(self.seed),
            "exact_moments": bool(self.exact_moments),
        }

    @classmethod
    def from_dict(cls, state: Mapping[str, Any], validate: bool = True) -> "SyntheticParams":
        if validate:
            validate_document(state, "synthetic-schema")
        keys = cls.__dataclass_fields__.keys()
        return cls(**{k: v for k, v in state.items() if k in keys})

    @classmethod
    def default(cls, **overrides) -> "SyntheticParams":
        state = load_bundled_json("synthetic")
        state.update(overrides)
        return cls.from_dict(state, validate=False)


def _whitened_normal(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Standard normal draws transformed to zero sample mean and identity sample covariance."""
    draws = rng.standard_normal((n, d))
    draws -= draws.mean(axis=0)
    factor = linalg.cholesky(draws.T @ draws / n, lower=True)
    return linalg.solve_triangular(factor, draws.T, lower=True).T


def _covariance_factor(cov: np.ndarray) -> np.ndarray:
    eigvals, eigvecs = linalg.eigh(cov)
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def gen_synthetic(params: Optional[SyntheticParams] = None) -> Dataset:
    """
    Draw the two-group dataset and shuffle its rows.

    Returns
    -------
    :class:`~.Dataset`
        ``2 * n_per_group`` rows with the numeric features ``x0``..``x6``, the binary group
        indicator ``s`` and the numeric target ``y``.
    """
    if params is None:
        params = SyntheticParams.default()
    rng = np.random.default_rng(params.seed)
    n = params.n_per_group
    blocks = []
    groups = ((params.mean_0, params.cov_0, params.target_coeffs_0, params.noise_sd_0),
              (params.mean_1, params.cov_1, params.target_coeffs_1, params.noise_sd_1))
    for label, (mean, cov, coeffs, noise_sd) in enumerate(groups):
        if params.exact_moments:
            innovations = _whitened_normal(rng, n, N_FEATURES + 1)
            x = mean + innovations[:, :N_FEATURES] @ _covariance_factor(cov).T
            noise = innovations[:, N_FEATURES]
        else:
            x = rng.multivariate_normal(mean, cov, size=n, method="eigh")
            noise = rng.standard_normal(n)
        y = x @ coeffs + noise_sd * noise
        blocks.append((x, y, np.full(n, label, dtype=np.int64)))
    X = np.vstack([b[0] for b in blocks])
    y = np.concatenate([b[1] for b in blocks])
    s = np.concatenate([b[2] for b in blocks])
    order = rng.permutation(2 * n)

    frame = pd.DataFrame(X[order], columns=list(FEATURE_NAMES))
    frame[SENSITIVE_NAME] = s[order]
    frame[TARGET_NAME] = y[order]
    kinds = {name: ColumnKind.numeric for name in FEATURE_NAMES}
    kinds[SENSITIVE_NAME] = ColumnKind.binary
    kinds[TARGET_NAME] = ColumnKind.numeric
    return Dataset.from_frame(frame, kinds)


def gen_two_group(n: int, d: int, seed: int = 0, shift: float = 1.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Two-group Gaussian data of arbitrary size.

    The first half of the features are shifted by ``shift`` in group 1 and the target is a
    fixed random linear function of the features plus unit noise.

    Returns
    -------
    X : np.ndarray
        ``n x d`` features.
    y : np.ndarray
        Continuous target.
    s : np.ndarray
        ``0/1`` group labels.
    """
    if n < 2 or d < 1:
        raise PreconditionError("gen_two_group needs n >= 2 and d >= 1", n=n, d=d)
    rng = np.random.default_rng(seed)
    s = (rng.random(n) < 0.5).astype(np.int64)
    s[:2] = (0, 1)
    X = rng.standard_normal((n, d))
    X[:, : max(1, d // 2)] += shift * s[:, None]
    beta = rng.standard_normal(d)
    y = X @ beta + rng.standard_normal(n)
    return X, y, s
