"""
Experiment orchestration.

Two protocols are implemented on top of the fitting routines:

* :func:`run_experiment_a` scores the learned representation itself over repeated random
  train/test splits, for every ``eta`` of the grid.
* :func:`run_experiment_b` trains a GLM on the representation inside a k-fold cross
  validation and scores its predictions for accuracy (or MSE) and fairness.

Both emit one :class:`ResultRow` per (``eta``, split or fold) in a canonical order, so the
tables they write are identical whatever the number of worker threads.
"""
import enum
import json
import logging
import math
import os
import time
import warnings

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .dataset import ColumnKind, Dataset, PreparedDataset, split_folds, train_test_split
from .encoding import CenteredMatrix, EncodingSpec, Normalization, center, encode_center
from .fair_pls import VanillaSelection, eo_fair_pls_fit, fair_pls_fit, vanilla_fair_pls
from .kernel import KernelFairPlsModel, KernelSpec, kfpls_fit
from .metrics import (
    FairnessReport, accuracy, cov2, disparate_impact, eopp_ratio, evaluate_representation, ks_statistic,
    mean_squared_error)
from .optimize import GdParams
from .pls import nipals_fit
from .predictors import DEFAULT_RIDGE, GlmFamily, glm_fit, load_external_representation
from .recipe import load_recipe, load_recipe_dataset, validate_document
from .synthetic import FEATURE_NAMES, SENSITIVE_NAME, TARGET_NAME, SyntheticParams, gen_synthetic, gen_two_group
from .utils import ConfigurationError, FairPlsError, FitWarning, UndefinedMetricError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

NAN = float("nan")

CV_SELECT = "cv-select"
SYNTHETIC = "synthetic"
SENTINEL = 1e6


class Method(enum.Enum):
    pls = "pls"
    fair_pls = "fair-pls"
    eo_fair_pls = "eo-fair-pls"
    kernel_fair_pls = "kernel-fair-pls"
    vanilla = "vanilla"


@dataclass(frozen=True)
class ExperimentConfig:
    """
    The settings of one experiment run.

    Attributes
    ----------
    dataset : str
        A bundled recipe name, a path to a recipe file, or ``"synthetic"``.
    method : :class:`Method`
    eta_grid : tuple of float
        Non-negative fairness trade-offs, evaluated in order.
    k : int or ``"cv-select"``
        The number of components, or ``"cv-select"`` to choose it by cross validation on
        the training rows of every split.
    k_folds : int
        Folds of Experiment B and of the k selection.
    n_splits : int
        Random splits of Experiment A, each holding ``train_fraction`` of the rows for training.
    target, sensitive, task : str, optional
        When given, must agree with the dataset's recipe.
    """

    dataset: str
    method: Method = Method.fair_pls
    eta_grid: Tuple[float, ...] = (0.0,)
    k: Union[int, str] = 2
    k_max: Optional[int] = None
    k_folds: int = 7
    n_splits: int = 3
    train_fraction: float = 0.7
    seed: int = 0
    threads: int = 1
    tau: float = 0.5
    kernel_x: KernelSpec = field(default_factory=KernelSpec)
    kernel_s: KernelSpec = field(default_factory=KernelSpec)
    allow_large_n: bool = False
    eo_ridge: float = 0.0
    threshold: float = 0.5
    glm_ridge: float = DEFAULT_RIDGE
    alpha: float = 0.05
    gd: GdParams = field(default_factory=GdParams)
    data_dir: Optional[str] = None
    synthetic: Mapping[str, Any] = field(default_factory=dict)
    target: Optional[str] = None
    sensitive: Optional[str] = None
    task: Optional[str] = None
    out_dir: str = "."
    name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "eta_grid", tuple(float(e) for e in self.eta_grid))
        if not self.eta_grid:
            raise ConfigurationError("eta_grid must not be empty")
        negative = [e for e in self.eta_grid if not e >= 0]
        if negative:
            raise ConfigurationError(f"eta values must be non-negative, got {negative}")
        if self.k != CV_SELECT:
            if isinstance(self.k, bool) or not isinstance(self.k, (int, np.integer)) or self.k < 0:
                raise ConfigurationError(f"k must be a non-negative count or {CV_SELECT!r}, got {self.k!r}")
        if self.k_max is not None and self.k_max < 1:
            raise ConfigurationError(f"k_max must be positive, got {self.k_max}")
        if self.k_folds < 2:
            raise ConfigurationError(f"k_folds must be at least 2, got {self.k_folds}")
        if self.n_splits < 1 or self.threads < 1:
            raise ConfigurationError("n_splits and threads must be positive")
        if not 0.0 < self.tau < 1.0:
            raise ConfigurationError(f"tau must lie in (0, 1), got {self.tau}")
        if self.task not in (None, "classification", "regression"):
            raise ConfigurationError(f"Unknown task {self.task!r}")

    @property
    def cv_select(self) -> bool:
        return self.k == CV_SELECT

    @property
    def stem(self) -> str:
        if self.name:
            return self.name
        base = os.path.splitext(os.path.basename(self.dataset))[0]
        return f"{base}_{self.method.value}"

    def replace(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> Dict[str, Any]:
        state: Dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, Method):
                value = value.value
            elif isinstance(value, (KernelSpec, GdParams)):
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, Mapping):
                if not value:
                    continue
                value = dict(value)
            state[f.name] = value
        return state

    @classmethod
    def from_dict(cls, state: Mapping[str, Any], validate: bool = True) -> "ExperimentConfig":
        if validate:
            validate_document(state, "experiment-schema")
        kwargs: Dict[str, Any] = {}
        for key, value in state.items():
            if key not in cls.__dataclass_fields__:
                raise ConfigurationError(f"Unknown configuration key {key!r}")
            if key == "method":
                value = Method(value)
            elif key in ("kernel_x", "kernel_s"):
                value = KernelSpec.from_dict(value)
            elif key == "gd":
                value = GdParams.from_dict(value)
            kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: os.PathLike, **overrides) -> "ExperimentConfig":
        """Read a JSON configuration file; ``overrides`` that are not ``None`` replace its values."""
        with open(path, "rt", encoding="utf-8") as fh:
            try:
                state = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigurationError(f"{path} is not valid JSON: {err}") from err
        config = cls.from_dict(state)
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return config.replace(**overrides) if overrides else config


@dataclass
class ResultRow:
    """
    One evaluated (``eta``, split or fold) cell of an experiment.

    ``error`` holds the failure of the cell, if any, in which case the metrics are ``nan``.
    """

    dataset: str
    method: str
    eta: float
    k: int
    fold: int
    split_seed: int
    downstream: str = "none"
    report: FairnessReport = field(default_factory=FairnessReport)
    error: str = ""
    wall_time_ms: float = NAN

    def to_dict(self) -> Dict[str, Any]:
        state = {
            "dataset": self.dataset,
            "method": self.method,
            "eta": self.eta,
            "k": self.k,
            "fold": self.fold,
            "split_seed": self.split_seed,
            "downstream": self.downstream,
        }
        state.update(self.report.to_dict())
        state["error"] = self.error
        return state


KEY_COLUMNS = ["dataset", "method", "eta", "downstream"]
ROW_COLUMNS = (
    ["dataset", "method", "eta", "k", "fold", "split_seed", "downstream"] + FairnessReport.fields() + ["error"])
METRIC_COLUMNS = [name for name in FairnessReport.fields() if name != "di_degenerate"]
SUMMARY_COLUMNS = KEY_COLUMNS + ["n", "n_failed", "k_mean"] + [
    f"{name}_{stat}" for name in METRIC_COLUMNS for stat in ("mean", "std")]
TIMING_COLUMNS = ["dataset", "method", "eta", "fold", "wall_time_ms"]


def summarize(rows: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and standard deviation of every metric per (dataset, method, ``eta``, downstream).

    Failed rows are counted in ``n_failed`` and left out of the statistics.
    """
    records = []
    if len(rows):
        errors = rows["error"].fillna("").astype(str)
        for key, group in rows.groupby(KEY_COLUMNS, sort=False):
            ok = group[errors.loc[group.index] == ""]
            record: Dict[str, Any] = dict(zip(KEY_COLUMNS, key))
            record["n"] = len(ok)
            record["n_failed"] = len(group) - len(ok)
            record["k_mean"] = float(ok["k"].mean()) if len(ok) else NAN
            for name in METRIC_COLUMNS:
                values = ok[name].astype(float)
                record[f"{name}_mean"] = float(values.mean()) if len(values) else NAN
                record[f"{name}_std"] = float(values.std(ddof=1)) if len(values) else NAN
            records.append(record)
    return pd.DataFrame(records, columns=SUMMARY_COLUMNS)


def _json_safe(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


@dataclass
class ExperimentResult:
    """The rows of a finished experiment, with the components selected per ``eta`` when k was chosen by CV."""

    config: ExperimentConfig
    rows: List[ResultRow]
    selected_k: Dict[float, List[int]] = field(default_factory=dict)

    def rows_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.rows], columns=ROW_COLUMNS)

    def summary(self) -> pd.DataFrame:
        return summarize(self.rows_frame())

    def timings_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[r.dataset, r.method, r.eta, r.fold, r.wall_time_ms] for r in self.rows], columns=TIMING_COLUMNS)

    def write(self, out_dir: Optional[os.PathLike] = None, stem: Optional[str] = None) -> Dict[str, str]:
        """
        Write ``<stem>_rows.csv``, ``<stem>_summary.csv``, ``<stem>_summary.json`` and
        ``<stem>_timings.csv``. Only the timings file depends on the machine.
        """
        out_dir = str(out_dir or self.config.out_dir)
        stem = stem or self.config.stem
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "rows": os.path.join(out_dir, f"{stem}_rows.csv"),
            "summary": os.path.join(out_dir, f"{stem}_summary.csv"),
            "summary_json": os.path.join(out_dir, f"{stem}_summary.json"),
            "timings": os.path.join(out_dir, f"{stem}_timings.csv"),
        }
        summary = self.summary()
        self.rows_frame().to_csv(paths["rows"], index=False)
        summary.to_csv(paths["summary"], index=False)
        with open(paths["summary_json"], "wt", encoding="utf-8") as fh:
            records = [{k: _json_safe(v) for k, v in rec.items()} for rec in summary.to_dict(orient="records")]
            json.dump({"config": self.config.to_dict(), "summary": records}, fh, indent=2)
            fh.write("\n")
        self.timings_frame().to_csv(paths["timings"], index=False)
        logger.info("Wrote %d rows to %s", len(self.rows), paths["rows"])
        return paths


def load_experiment_data(cfg: ExperimentConfig) -> PreparedDataset:
    """
    Build the dataset named by the configuration.

    Raises
    ------
    ConfigurationError
        When the configured target, sensitive column or task disagree with the dataset.
    """
    if cfg.dataset == SYNTHETIC:
        overrides = {"seed": cfg.seed}
        overrides.update(cfg.synthetic)
        table = gen_synthetic(SyntheticParams.default(**overrides))
        features = table.select(FEATURE_NAMES)
        data = PreparedDataset(
            SYNTHETIC, features, table.values(TARGET_NAME).astype(np.float64),
            table.values(SENSITIVE_NAME).astype(np.float64), "regression",
            EncodingSpec.for_dataset(features, Normalization.zero_mean_unit_variance))
        target, sensitive = TARGET_NAME, SENSITIVE_NAME
    else:
        recipe = load_recipe(cfg.dataset)
        data = load_recipe_dataset(recipe, cfg.data_dir)
        target, sensitive = recipe.target.column, recipe.sensitive.column
    if cfg.target is not None and cfg.target != target:
        raise ConfigurationError(f"The dataset's target is {target!r}, not {cfg.target!r}")
    if cfg.sensitive is not None and cfg.sensitive != sensitive:
        raise ConfigurationError(f"The dataset's sensitive column is {sensitive!r}, not {cfg.sensitive!r}")
    if cfg.task is not None and cfg.task != data.task:
        raise ConfigurationError(f"The dataset is a {data.task} task, not {cfg.task}")
    return data


@dataclass(frozen=True, eq=False)
class FoldData:
    """
    One train/test partition, preprocessed with statistics of the training rows only.

    The standardized training target and the centered sensitive attribute feed the fits;
    the raw vectors feed the metrics and downstream models.
    """

    train: np.ndarray
    test: np.ndarray
    X_train: CenteredMatrix
    X_test: CenteredMatrix
    Y_train: CenteredMatrix
    S_train: CenteredMatrix
    y_train: np.ndarray
    y_test: np.ndarray
    s_train: np.ndarray
    s_test: np.ndarray


def prepare_fold(data: PreparedDataset, train: np.ndarray, test: np.ndarray) -> FoldData:
    train_set, test_set = data.subset(train), data.subset(test)
    spec = data.feature_spec or EncodingSpec.for_dataset(data.features)
    X_train = encode_center(train_set.features, spec)
    X_test = X_train.stats.transform(test_set.features)
    return FoldData(
        np.asarray(train), np.asarray(test), X_train, X_test,
        center(train_set.target[:, None], scale=True), center(train_set.sensitive[:, None]),
        train_set.target, test_set.target, train_set.sensitive, test_set.sensitive)


def fit_representation(cfg: ExperimentConfig, fold: FoldData, k: int, eta: float):
    """Fit the configured method on the training rows of ``fold``."""
    X, Y, S = fold.X_train, fold.Y_train, fold.S_train
    if cfg.method == Method.pls:
        return nipals_fit(X, Y, k)
    if cfg.method == Method.fair_pls:
        return fair_pls_fit(X, Y, S, k, eta, cfg.gd)
    if cfg.method == Method.eo_fair_pls:
        return eo_fair_pls_fit(X, Y, S, k, eta, cfg.gd, ridge=cfg.eo_ridge)
    if cfg.method == Method.kernel_fair_pls:
        return kfpls_fit(X, Y, fold.s_train, k, eta, cfg.kernel_x, cfg.kernel_s, cfg.gd, cfg.allow_large_n)
    return vanilla_fair_pls(X, Y, fold.s_train, k, cfg.tau)


def truncate_model(model, k: int):
    """The model restricted to its first ``k`` components."""
    if isinstance(model, VanillaSelection):
        return VanillaSelection(model.model.truncate(k), model.ratios[:k], model.mask[:k], model.tau)
    return model.truncate(k)


def _component_cap(cfg: ExperimentConfig, fold: FoldData) -> int:
    n, d = fold.X_train.shape
    if cfg.method == Method.kernel_fair_pls:
        return n
    return min(n, d)


def _dispatch(cfg: ExperimentConfig, func: Callable, tasks: Sequence[tuple]) -> list:
    if cfg.threads == 1 or len(tasks) < 2:
        return [func(*task) for task in tasks]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(lambda task: func(*task), tasks))


def _fold_objectives(cfg: ExperimentConfig, data: PreparedDataset, etas: Sequence[float],
                     train: np.ndarray, test: np.ndarray) -> Dict[float, np.ndarray]:
    fold = prepare_fold(data, train, test)
    cap = _component_cap(cfg, fold)
    k_max = min(cfg.k_max or min(fold.X_train.shape), cap)
    objectives = {}
    for eta in etas:
        model = fit_representation(cfg, fold, k_max, eta)
        values = np.zeros(k_max)
        for k in range(1, k_max + 1):
            T = truncate_model(model, k).transform(fold.X_test)
            values[k - 1] = cov2(T, fold.y_test) - eta * cov2(T, fold.s_test)
        objectives[eta] = values
    return objectives


def select_k(cfg: ExperimentConfig, data: Optional[PreparedDataset] = None,
             etas: Optional[Sequence[float]] = None) -> Dict[float, int]:
    """
    Choose the number of components for each ``eta`` by k-fold cross validation.

    Every fold fits ``k_max`` components once and scores each prefix on its held-out rows
    with ``Cov2(T, y) - eta * Cov2(T, s)``. The ``k`` with the best mean over folds wins;
    ties go to the smaller ``k``.
    """
    if data is None:
        data = load_experiment_data(cfg)
    etas = tuple(cfg.eta_grid if etas is None else etas)
    folds = split_folds(data.n, cfg.k_folds, cfg.seed)
    per_fold = _dispatch(cfg, _fold_objectives, [(cfg, data, etas, train, test) for train, test in folds])
    selected = {}
    for eta in etas:
        width = min(len(f[eta]) for f in per_fold)
        if width == 0:
            raise ConfigurationError("No component can be fitted on the cross-validation folds")
        mean = np.mean([f[eta][:width] for f in per_fold], axis=0)
        selected[eta] = int(np.argmax(mean)) + 1
        logger.info("Selected k=%d at eta=%g (CV objective %0.6g)", selected[eta], eta, mean[selected[eta] - 1])
    return selected


def _resolve_k(cfg: ExperimentConfig, data: PreparedDataset, fold: FoldData, eta: float) -> int:
    cap = _component_cap(cfg, fold)
    if cfg.cv_select:
        inner = select_k(cfg.replace(threads=1), data.subset(fold.train), etas=(eta,))
        return min(inner[eta], cap)
    if cfg.k > cap:
        logger.info("Capping k=%d at the %d components the training rows allow", cfg.k, cap)
    return min(int(cfg.k), cap)


def _error_message(err: Exception) -> str:
    return f"{type(err).__name__}: {err}"


def _representation_task(cfg: ExperimentConfig, data: PreparedDataset, eta: float, index: int, split_seed: int,
                         train: np.ndarray, test: np.ndarray) -> ResultRow:
    row = ResultRow(data.name, cfg.method.value, eta, 0, index, split_seed)
    start = time.perf_counter()
    logger.info("Experiment A on %s: eta=%g split %d", data.name, eta, index)
    try:
        fold = prepare_fold(data, train, test)
        model = fit_representation(cfg, fold, _resolve_k(cfg, data, fold, eta), eta)
        scores = model.transform(fold.X_test)
        row.k = scores.shape[1]
        row.report = evaluate_representation(model, fold.X_test, fold.y_test, fold.s_test, scores)
    except FairPlsError as err:
        logger.warning("Split %d at eta=%g failed: %s", index, eta, err)
        row.error = _error_message(err)
    row.wall_time_ms = (time.perf_counter() - start) * 1000.0
    return row


def run_experiment_a(cfg: ExperimentConfig, data: Optional[PreparedDataset] = None) -> ExperimentResult:
    """
    Fair representation: for each ``eta`` and each of ``n_splits`` random splits, fit on
    the training rows and measure ``Cov2(T, y)``, ``Cov2(T, s)`` and the reconstruction
    error on the test rows. Split ``i`` is drawn with seed ``cfg.seed + i``.
    """
    if data is None:
        data = load_experiment_data(cfg)
    splits = [(cfg.seed + i, train_test_split(data.n, cfg.train_fraction, cfg.seed + i)) for i in range(cfg.n_splits)]
    tasks = [(cfg, data, eta, i, seed, train, test)
             for eta in cfg.eta_grid for i, (seed, (train, test)) in enumerate(splits)]
    rows = _dispatch(cfg, _representation_task, tasks)
    return ExperimentResult(cfg, rows, _selected_k(cfg, rows))


def score_predictions(cfg: ExperimentConfig, report: FairnessReport, task: str, prediction: np.ndarray,
                       y: np.ndarray, s: np.ndarray):
    if task == "regression":
        report.mse = mean_squared_error(prediction, y)
        report.ks = ks_statistic(prediction, s)
        return
    yhat = (prediction >= cfg.threshold).astype(np.float64)
    report.accuracy = accuracy(yhat, y)
    try:
        di = disparate_impact(yhat, s, cfg.alpha)
        report.di, report.di_ci_lo, report.di_ci_hi, report.di_degenerate = di.di, di.ci_lo, di.ci_hi, di.degenerate
    except UndefinedMetricError as err:
        logger.warning("Disparate impact undefined: %s", err)
    try:
        report.eopp = eopp_ratio(yhat, y, s)
    except UndefinedMetricError as err:
        logger.warning("Equality of opportunity undefined: %s", err)


def _prediction_task(cfg: ExperimentConfig, data: PreparedDataset, eta: float, index: int,
                     train: np.ndarray, test: np.ndarray) -> ResultRow:
    row = ResultRow(data.name, cfg.method.value, eta, 0, index, cfg.seed, "glm")
    start = time.perf_counter()
    logger.info("Experiment B on %s: eta=%g fold %d", data.name, eta, index)
    try:
        fold = prepare_fold(data, train, test)
        model = fit_representation(cfg, fold, _resolve_k(cfg, data, fold, eta), eta)
        T_train = model.transform(fold.X_train)
        T_test = model.transform(fold.X_test)
        row.k = T_test.shape[1]
        report = evaluate_representation(model, fold.X_test, fold.y_test, fold.s_test, T_test)
        family = GlmFamily.logistic if data.task == "classification" else GlmFamily.linear
        glm = glm_fit(T_train, fold.y_train, family, cfg.glm_ridge)
        score_predictions(cfg, report, data.task, glm.predict(T_test), fold.y_test, fold.s_test)
        row.report = report
    except FairPlsError as err:
        logger.warning("Fold %d at eta=%g skipped: %s", index, eta, err)
        row.error = _error_message(err)
    row.wall_time_ms = (time.perf_counter() - start) * 1000.0
    return row


def run_experiment_b(cfg: ExperimentConfig, data: Optional[PreparedDataset] = None) -> ExperimentResult:
    """
    Fair predictions: ``k_folds``-fold cross validation where each fold fits the
    representation on its training rows, trains a GLM on the training scores (logistic for
    classification with a ``threshold`` on its probabilities, linear for regression) and
    scores the held-out predictions. Failed folds are kept as rows with an ``error`` and
    counted in the summary's ``n_failed``.
    """
    if data is None:
        data = load_experiment_data(cfg)
    folds = split_folds(data.n, cfg.k_folds, cfg.seed)
    tasks = [(cfg, data, eta, i, train, test) for eta in cfg.eta_grid for i, (train, test) in enumerate(folds)]
    rows = _dispatch(cfg, _prediction_task, tasks)
    return ExperimentResult(cfg, rows, _selected_k(cfg, rows))


def _selected_k(cfg: ExperimentConfig, rows: Sequence[ResultRow]) -> Dict[float, List[int]]:
    if not cfg.cv_select:
        return {}
    selected: Dict[float, List[int]] = {}
    for row in rows:
        if not row.error:
            selected.setdefault(row.eta, []).append(row.k)
    return selected


def run_benchmark(sizes: Sequence[Tuple[int, int]], k: int = 2, repeats: int = 5, eta: float = 0.0,
                  seed: int = 0, gd: Optional[GdParams] = None) -> pd.DataFrame:
    """
    Wall time of :func:`~.nipals_fit` and :func:`~.fair_pls_fit` on two-group Gaussian data.

    Returns
    -------
    pd.DataFrame
        One row per size and method with the median, minimum and maximum over ``repeats``
        runs, in milliseconds.
    """
    if repeats < 1:
        raise ConfigurationError(f"repeats must be positive, got {repeats}")
    records = []
    for n, d in sizes:
        if n < 2 or d < 1:
            raise ConfigurationError(f"Invalid benchmark size ({n}, {d})")
        X, y, s = gen_two_group(n, d, seed)
        Xc, Yc, Sc = center(X), center(y[:, None]), center(s[:, None])
        kk = min(k, n, d)
        fits = (
            ("nipals", lambda: nipals_fit(Xc, Yc, kk)),
            ("fair-pls", lambda: fair_pls_fit(Xc, Yc, Sc, kk, eta, gd)),
        )
        for label, fit in fits:
            times = []
            for _ in range(repeats):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", FitWarning)
                    start = time.perf_counter()
                    fit()
                    times.append((time.perf_counter() - start) * 1000.0)
            records.append({
                "n": n, "d": d, "k": kk, "method": label, "eta": eta, "repeats": repeats,
                "median_ms": float(np.median(times)), "min_ms": float(np.min(times)),
                "max_ms": float(np.max(times)),
            })
            logger.info("Benchmark n=%d d=%d %s: median %0.2f ms", n, d, label, records[-1]["median_ms"])
    return pd.DataFrame(records)


COMPARISON_COLUMNS = [
    "method", "parameter", "value", "n_components", "cov2_rep_target", "cov2_rep_sensitive",
    "reconstruction_error", "error"]


def _comparison_record(method: str, parameter: str, value: float, n_components: int,
                       report: Optional[FairnessReport] = None, error: str = "") -> Dict[str, Any]:
    report = report or FairnessReport()
    return {
        "method": method, "parameter": parameter, "value": value, "n_components": n_components,
        "cov2_rep_target": report.cov2_rep_target, "cov2_rep_sensitive": report.cov2_rep_sensitive,
        "reconstruction_error": report.reconstruction_error, "error": error,
    }


def compare_baselines(cfg: ExperimentConfig, tau_grid: Sequence[float], external: Optional[os.PathLike] = None,
                      data: Optional[PreparedDataset] = None) -> pd.DataFrame:
    """
    Score vanilla component selection for each ``tau`` against the configured fair method
    for each ``eta``, on the test rows of one random split (seed ``cfg.seed``).

    ``external`` names a ``row_id,<scores...>`` CSV holding a representation of the test
    rows computed elsewhere; it is scored with the same covariance metrics. Row ids are
    positions in the prepared dataset.
    """
    if data is None:
        data = load_experiment_data(cfg)
    train, test = train_test_split(data.n, cfg.train_fraction, cfg.seed)
    fold = prepare_fold(data, train, test)
    fair_cfg = cfg if cfg.method not in (Method.pls, Method.vanilla) else cfg.replace(method=Method.fair_pls)
    records = []
    for tau in tau_grid:
        try:
            vanilla_cfg = cfg.replace(method=Method.vanilla, tau=tau)
            selection = fit_representation(vanilla_cfg, fold, _resolve_k(vanilla_cfg, data, fold, 0.0), 0.0)
            scores = selection.transform(fold.X_test)
            report = evaluate_representation(selection, fold.X_test, fold.y_test, fold.s_test, scores)
            records.append(_comparison_record("vanilla", "tau", tau, scores.shape[1], report))
        except FairPlsError as err:
            records.append(_comparison_record("vanilla", "tau", tau, 0, error=_error_message(err)))
    for eta in cfg.eta_grid:
        try:
            model = fit_representation(fair_cfg, fold, _resolve_k(fair_cfg, data, fold, eta), eta)
            scores = model.transform(fold.X_test)
            report = evaluate_representation(model, fold.X_test, fold.y_test, fold.s_test, scores)
            records.append(_comparison_record(fair_cfg.method.value, "eta", eta, scores.shape[1], report))
        except FairPlsError as err:
            records.append(_comparison_record(fair_cfg.method.value, "eta", eta, 0, error=_error_message(err)))
    if external is not None:
        scores, _ = load_external_representation(external, fold.test)
        report = FairnessReport(cov2(scores, fold.y_test), cov2(scores, fold.s_test))
        records.append(_comparison_record("external", "", NAN, scores.shape[1], report))
    return pd.DataFrame(records, columns=COMPARISON_COLUMNS)


def poison_rows(data: PreparedDataset, rows: Sequence[int], sentinel: float = SENTINEL) -> PreparedDataset:
    """
    A copy of ``data`` where the given rows carry sentinel values: numeric features and
    regression targets are set to ``sentinel``, binary targets and the sensitive attribute
    are flipped.
    """
    rows = np.asarray(rows, dtype=int)
    frame = data.features.frame.copy()
    numeric = [frame.columns.get_loc(c.name) for c in data.features.columns if c.kind == ColumnKind.numeric]
    if numeric:
        frame.iloc[rows, numeric] = sentinel
    features = Dataset(frame, data.features.columns)
    target = np.array(data.target, dtype=np.float64, copy=True)
    target[rows] = 1.0 - target[rows] if data.task == "classification" else sentinel
    sensitive = np.array(data.sensitive, dtype=np.float64, copy=True)
    sensitive[rows] = 1.0 - sensitive[rows]
    return PreparedDataset(data.name, features, target, sensitive, data.task, data.feature_spec)


def _fitted_parameters(cfg: ExperimentConfig, data: PreparedDataset, train: np.ndarray, test: np.ndarray,
                       eta: float) -> Dict[str, np.ndarray]:
    fold = prepare_fold(data, train, test)
    k = _resolve_k(cfg, data, fold, eta)
    model = fit_representation(cfg, fold, k, eta)
    params = {
        "k": np.array([k]),
        "col_means": fold.X_train.col_means,
        "col_scales": fold.X_train.col_scales,
        "train_scores": model.transform(fold.X_train),
    }
    if isinstance(model, VanillaSelection):
        params.update(W=model.model.W, mask=model.mask.astype(np.float64))
    elif isinstance(model, KernelFairPlsModel):
        params.update(A=model.A, V=model.V)
    else:
        params.update(W=model.W, loadings=model.loadings)
    return params


def leakage_check(cfg: ExperimentConfig, data: Optional[PreparedDataset] = None) -> List[str]:
    """
    Fit on one split twice, once with the test rows poisoned by :func:`poison_rows`, and
    list every fitted parameter that changed. An empty list means no test row influenced
    the preprocessing, the component count or the fit.
    """
    if data is None:
        data = load_experiment_data(cfg)
    train, test = train_test_split(data.n, cfg.train_fraction, cfg.seed)
    poisoned = poison_rows(data, test)
    mismatches = []
    for eta in cfg.eta_grid:
        clean = _fitted_parameters(cfg, data, train, test, eta)
        dirty = _fitted_parameters(cfg, poisoned, train, test, eta)
        for name, value in clean.items():
            if value.shape != dirty[name].shape or not np.array_equal(value, dirty[name]):
                mismatches.append(f"eta={eta:g}: fitted {name} changed when test rows were poisoned")
    if mismatches:
        logger.error("Leakage check failed: %s", "; ".join(mismatches))
    else:
        logger.info("Leakage check passed for %d eta values", len(cfg.eta_grid))
    return mismatches


@dataclass
class AuditReport:
    checked: int = 0
    mismatches: List[str] = field(default_factory=list)
    leakage_checked: bool = False

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "checked": self.checked,
            "mismatches": list(self.mismatches),
            "leakage_checked": self.leakage_checked,
        }


def summary_path_for(rows_path: os.PathLike) -> str:
    rows_path = str(rows_path)
    if rows_path.endswith("_rows.csv"):
        return rows_path[:-len("_rows.csv")] + "_summary.csv"
    raise ConfigurationError(f"Cannot derive a summary path from {rows_path}, expected a *_rows.csv file")


def self_audit(rows_path: os.PathLike, summary_path: Optional[os.PathLike] = None,
               cfg: Optional[ExperimentConfig] = None, leakage: bool = False) -> AuditReport:
    """
    Recompute every summary statistic from the per-row CSV and compare it with the
    written summary; with ``leakage``, also run :func:`leakage_check` for ``cfg``.
    """
    summary_path = summary_path or summary_path_for(rows_path)
    rows = pd.read_csv(rows_path, keep_default_na=True)
    written = pd.read_csv(summary_path)
    expected = summarize(rows)
    report = AuditReport()
    if list(written.columns) != SUMMARY_COLUMNS:
        report.mismatches.append(f"{summary_path} does not have the summary columns")
        return report
    if len(written) != len(expected):
        report.mismatches.append(f"{summary_path} has {len(written)} groups, the rows give {len(expected)}")
        return report
    for i in range(len(expected)):
        for column in SUMMARY_COLUMNS:
            a, b = expected[column].iloc[i], written[column].iloc[i]
            report.checked += 1
            if column in ("dataset", "method", "downstream"):
                same = str(a) == str(b)
            else:
                same = bool(np.isclose(float(a), float(b), rtol=1e-12, atol=0.0, equal_nan=True))
            if not same:
                report.mismatches.append(f"group {i} {column}: summary has {b!r}, rows give {a!r}")
    if leakage:
        if cfg is None:
            raise ConfigurationError("The leakage check needs an experiment configuration")
        report.mismatches.extend(leakage_check(cfg))
        report.leakage_checked = True
    return report
