import json
import logging
import os
import sys

from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd

from fairpls.encoding import center, encode_center
from fairpls.experiment import (
    CV_SELECT, ExperimentConfig, Method, compare_baselines, load_experiment_data, run_benchmark,
    run_experiment_a, run_experiment_b, score_predictions, select_k, self_audit)
from fairpls.fair_pls import eo_fair_pls_fit, fair_pls_fit
from fairpls.kernel import KernelKind, KernelSpec, kfpls_fit
from fairpls.metrics import FairnessReport, cov2, dataset_bias
from fairpls.pls import nipals_fit
from fairpls.predictors import load_external_predictions, load_external_representation, write_representation
from fairpls.serialize import read_model, write_model
from fairpls.synthetic import SyntheticParams, gen_synthetic
from fairpls.utils import ConfigurationError, FairPlsError

from fairpls.tools.utils import ColoringFormatter

CONTEXT_SETTINGS = dict(help_option_names=['-h', '--help'])

FORMAT_STRING = '[%(asctime)s] %(levelname).1s | %(name)s | %(filename)s:%(funcName)s:%(lineno)d | %(message)s'

DEFAULT_BENCH_SIZES = ((1000, 10), (10000, 10), (1000, 100))

logger = logging.getLogger(__name__)


def _report_error(err: BaseException):
    details = err.details() if isinstance(err, FairPlsError) else {}
    payload = {"error": type(err).__name__, "message": str(err), "details": details}
    click.echo(json.dumps(payload, default=str), err=True)


class ErrorReportingGroup(click.Group):
    """Turns library errors into a JSON line on STDERR and a non-zero exit code."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.exceptions.ClickException, click.exceptions.Abort, click.exceptions.Exit):
            raise
        except FairPlsError as err:
            logger.debug("Command failed", exc_info=True)
            _report_error(err)
            ctx.exit(2)
        except Exception as err:
            if logging.getLogger().isEnabledFor(logging.DEBUG):
                raise
            _report_error(err)
            ctx.exit(1)


@click.group(cls=ErrorReportingGroup, context_settings=CONTEXT_SETTINGS)
@click.option("-d", "--debug-logging", is_flag=True, help="Enable debug logging")
@click.option("-l", "--log-file", type=click.Path(writable=True, path_type=Path),
              help="Write log messages to this file as well as STDERR")
def main(debug_logging=False, log_file: Path = None):
    """Fit, apply and evaluate Fair PLS representations and run the fairness experiments."""
    logging.basicConfig(
        level='INFO' if not debug_logging else "DEBUG",
        stream=sys.stderr,
        format=FORMAT_STRING,
        datefmt="%H:%M:%S")

    fmtr = ColoringFormatter(FORMAT_STRING, datefmt='%H:%M:%S')
    for handler in logging.getLogger().handlers:
        handler.setFormatter(fmtr)

    if log_file is not None:
        if not log_file.parent.exists():
            os.makedirs(log_file.parent)
        handler = logging.FileHandler(str(log_file), mode='w')
        handler.setLevel(logging.INFO if not debug_logging else logging.DEBUG)
        handler.setFormatter(logging.Formatter(FORMAT_STRING, "%H:%M:%S"))
        logging.getLogger().addHandler(handler)

    if debug_logging:
        sys.excepthook = _debug_hook


def _parse_k(value: Optional[str]):
    if value is None or value == CV_SELECT:
        return value
    try:
        return int(value)
    except ValueError:
        raise click.BadParameter(f"expected a count or {CV_SELECT!r}, got {value!r}") from None


def _parse_kernel(value: Optional[str]) -> Optional[KernelSpec]:
    if value is None:
        return None
    kind, _, bandwidth = value.partition(":")
    try:
        kind = KernelKind(kind)
    except ValueError:
        raise click.BadParameter(f"expected linear, rbf or rbf:<bandwidth>, got {value!r}") from None
    if not bandwidth or bandwidth == "median":
        return KernelSpec(kind, bandwidth or None)
    try:
        return KernelSpec(kind, float(bandwidth))
    except ValueError:
        raise click.BadParameter(f"invalid bandwidth {bandwidth!r}") from None


def _experiment_options(func):
    options = [
        click.option("-c", "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="A JSON experiment configuration; the other options override its values"),
        click.option("--dataset", help="A bundled recipe name, a recipe file, or 'synthetic'"),
        click.option("--data-dir", type=click.Path(file_okay=False),
                     help="Directory holding the dataset CSV files"),
        click.option("-m", "--method", type=click.Choice([m.value for m in Method])),
        click.option("-e", "--eta", "eta_grid", type=float, multiple=True, help="An eta value, may be repeated"),
        click.option("-k", "--components", "k", help=f"Number of components or {CV_SELECT!r}"),
        click.option("--k-folds", type=int),
        click.option("--n-splits", type=int),
        click.option("--seed", type=int),
        click.option("-o", "--out-dir", type=click.Path(file_okay=False)),
        click.option("-t", "--threads", type=int),
        click.option("--allow-large-n", is_flag=True,
                     help="Permit dense kernel matrices above the default row limit"),
        click.option("--kernel-x", help="linear, rbf or rbf:<bandwidth> for the inputs"),
        click.option("--kernel-s", help="linear, rbf or rbf:<bandwidth> for the sensitive attribute"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _build_config(config_path=None, dataset=None, eta_grid=(), k=None, kernel_x=None, kernel_s=None,
                  allow_large_n=False, **overrides) -> ExperimentConfig:
    overrides.update(
        allow_large_n=allow_large_n or None,
        dataset=dataset, eta_grid=tuple(eta_grid) or None, k=_parse_k(k),
        kernel_x=_parse_kernel(kernel_x), kernel_s=_parse_kernel(kernel_s))
    if config_path is not None:
        return ExperimentConfig.from_file(config_path, **overrides)
    if dataset is None:
        raise click.UsageError("Either --config or --dataset is required")
    return ExperimentConfig(**{key: value for key, value in overrides.items() if value is not None})


def _echo_paths(paths: Dict[str, str]):
    for label, path in paths.items():
        click.echo(f"{label}: {path}")


@main.command("fit", short_help="Fit a representation on a whole dataset and save it")
@_experiment_options
@click.argument("outpath", type=click.Path(dir_okay=False, writable=True))
def fit(outpath, **options):
    """Fit the configured method on every row of the dataset and write the model to OUTPATH.

    The first eta of the grid is used.
    """
    cfg = _build_config(**options)
    if cfg.method == Method.vanilla:
        raise ConfigurationError("A vanilla selection is not a standalone model, fit method 'pls' instead")
    data = load_experiment_data(cfg)
    eta = cfg.eta_grid[0]
    k = select_k(cfg, data, etas=(eta,))[eta] if cfg.cv_select else cfg.k
    X = encode_center(data.features, data.feature_spec)
    Y, S = center(data.target[:, None], scale=True), center(data.sensitive[:, None])
    if cfg.method == Method.pls:
        model = nipals_fit(X, Y, k)
    elif cfg.method == Method.fair_pls:
        model = fair_pls_fit(X, Y, S, k, eta, cfg.gd)
    elif cfg.method == Method.eo_fair_pls:
        model = eo_fair_pls_fit(X, Y, S, k, eta, cfg.gd, ridge=cfg.eo_ridge)
    else:
        model = kfpls_fit(X, Y, data.sensitive, k, eta, cfg.kernel_x, cfg.kernel_s, cfg.gd, cfg.allow_large_n)
    write_model(model, outpath)
    click.echo(f"Wrote {model!r} to {outpath}")


@main.command("transform", short_help="Apply a saved model to a dataset")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("dataset")
@click.argument("outpath", type=click.Path(dir_okay=False, writable=True))
@click.option("--data-dir", type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, help="Seed of the synthetic dataset")
def transform(model_path, dataset, outpath, data_dir=None, seed=0):
    """Write the scores of every row of DATASET under the model at MODEL_PATH to OUTPATH as a row_id CSV."""
    model = read_model(model_path)
    if model.stats is None:
        raise ConfigurationError(f"{model_path} does not record the preprocessing of its training data")
    data = load_experiment_data(ExperimentConfig(dataset, data_dir=data_dir, seed=seed))
    scores = model.transform(model.stats.transform(data.features))
    write_representation(outpath, scores, np.arange(data.n))
    click.echo(f"Wrote {scores.shape[1]} components of {data.n} rows to {outpath}")


@main.command("eval", short_help="Score a representation of a dataset")
@click.argument("representation", type=click.Path(exists=True, dir_okay=False))
@click.argument("dataset")
@click.option("--data-dir", type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, help="Seed of the synthetic dataset")
@click.option("-p", "--predictions", type=click.Path(exists=True, dir_okay=False),
              help="A row_id,yhat CSV of predictions for the same rows")
@click.option("--threshold", type=float, default=0.5, help="Decision threshold for classification predictions")
def evaluate(representation, dataset, data_dir=None, seed=0, predictions=None, threshold=0.5):
    """Print the covariance and fairness metrics of REPRESENTATION, a row_id CSV covering every row of DATASET."""
    cfg = ExperimentConfig(dataset, data_dir=data_dir, seed=seed, threshold=threshold)
    data = load_experiment_data(cfg)
    ids = np.arange(data.n)
    scores, _ = load_external_representation(representation, ids)
    report = FairnessReport(cov2(scores, data.target), cov2(scores, data.sensitive))
    if predictions is not None:
        yhat = load_external_predictions(predictions, ids)
        score_predictions(cfg, report, data.task, yhat, data.target, data.sensitive)
    click.echo(json.dumps(_finite(report.to_dict()), indent=2))


def _finite(state: Dict[str, Any]) -> Dict[str, Any]:
    return {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in state.items()}


@main.command("experiment-a", short_help="Score fair representations over random splits")
@_experiment_options
def experiment_a(**options):
    """Experiment A: covariance with the target and the sensitive attribute and reconstruction error per eta."""
    cfg = _build_config(**options)
    result = run_experiment_a(cfg)
    _echo_paths(result.write())


@main.command("experiment-b", short_help="Score fair predictions by cross validation")
@_experiment_options
def experiment_b(**options):
    """Experiment B: accuracy or MSE and fairness of a GLM trained on the representation, per eta."""
    cfg = _build_config(**options)
    result = run_experiment_b(cfg)
    _echo_paths(result.write())


@main.command("select-k", short_help="Choose the number of components by cross validation")
@_experiment_options
def select_components(**options):
    """Print and save the number of components selected for each eta."""
    cfg = _build_config(**options)
    selected = select_k(cfg)
    table = pd.DataFrame({"eta": list(selected), "k": list(selected.values())})
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, f"{cfg.stem}_selected_k.csv")
    table.to_csv(path, index=False)
    for eta, k in selected.items():
        click.echo(f"eta={eta:g}\tk={k}")
    click.echo(f"table: {path}")


@main.command("bench", short_help="Time standard and Fair PLS fits")
@click.option("-s", "--size", "sizes", type=(int, int), multiple=True,
              help="A (n, d) pair, may be repeated")
@click.option("-k", "--components", "k", type=int, default=2, show_default=True)
@click.option("-r", "--repeats", type=int, default=5, show_default=True)
@click.option("-e", "--eta", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0)
@click.argument("outpath", type=click.Path(dir_okay=False, writable=True))
def bench(outpath, sizes: Sequence[Tuple[int, int]] = (), k=2, repeats=5, eta=0.0, seed=0):
    """Write median wall times over repeated fits to OUTPATH."""
    table = run_benchmark(sizes or DEFAULT_BENCH_SIZES, k, repeats, eta, seed)
    table.to_csv(outpath, index=False)
    click.echo(table.to_string(index=False))


@main.command("compare", short_help="Compare vanilla component selection with Fair PLS")
@_experiment_options
@click.option("--tau", "tau_grid", type=float, multiple=True, help="A selection threshold, may be repeated")
@click.option("-x", "--external", type=click.Path(exists=True, dir_okay=False),
              help="A row_id CSV representation of the test rows to score as well")
def compare(tau_grid=(), external=None, **options):
    """Score vanilla selections for each tau, the fair method for each eta, and an external representation."""
    cfg = _build_config(**options)
    table = compare_baselines(cfg, tau_grid or (0.1, 0.2, 0.5, 0.99), external)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, f"{cfg.stem}_comparison.csv")
    table.to_csv(path, index=False)
    click.echo(f"comparison: {path}")


@main.command("synth-gen", short_help="Write the synthetic two-group dataset")
@click.argument("outpath", type=click.Path(dir_okay=False, writable=True))
@click.option("-p", "--params", "params_path", type=click.Path(exists=True, dir_okay=False),
              help="A JSON file of synthetic dataset parameters")
@click.option("--seed", type=int, help="Override the parameters' seed")
def synth_gen(outpath, params_path=None, seed=None):
    """Draw the synthetic dataset and write it to OUTPATH as CSV."""
    if params_path is not None:
        with open(params_path, "rt", encoding="utf-8") as fh:
            params = SyntheticParams.from_dict(json.load(fh))
    else:
        params = SyntheticParams.default()
    if seed is not None:
        params = params.replace(seed=seed)
    dataset = gen_synthetic(params)
    dataset.frame.to_csv(outpath, index=False)
    click.echo(f"Wrote {dataset.n} rows to {outpath}")


@main.command("self-audit", short_help="Recompute a summary from its rows")
@click.argument("rows_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--summary", "summary_path", type=click.Path(exists=True, dir_okay=False),
              help="The summary to check, by default the one written next to ROWS_PATH")
@click.option("--leakage", is_flag=True, help="Also check that test rows cannot influence a fit")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="The experiment configuration, needed by --leakage")
def audit(rows_path, summary_path=None, leakage=False, config_path=None):
    """Check that every summary statistic is recomputable from ROWS_PATH, exiting with 1 on a mismatch."""
    cfg = ExperimentConfig.from_file(config_path) if config_path else None
    report = self_audit(rows_path, summary_path, cfg, leakage)
    click.echo(json.dumps(report.to_dict(), indent=2))
    if not report.ok:
        raise SystemExit(1)


@main.command("bias", short_help="Report the bias present in a dataset's labels")
@click.argument("dataset")
@click.option("--data-dir", type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, help="Seed of the synthetic dataset")
def bias(dataset, data_dir=None, seed=0):
    """Disparate impact of binary targets, or the KS statistic of continuous ones, between the two groups."""
    data = load_experiment_data(ExperimentConfig(dataset, data_dir=data_dir, seed=seed))
    report = dataset_bias(data.target, data.sensitive, data.task)
    state = {"dataset": data.name, "task": data.task, "n": data.n}
    state.update(_finite(report.to_dict()))
    click.echo(json.dumps(state, indent=2))


def _debug_hook(type, value, tb):
    if not sys.stderr.isatty():
        click.secho("Running interactively, not starting debugger", fg="yellow")
        sys.__excepthook__(type, value, tb)
    else:
        import pdb
        import traceback
        traceback.print_exception(type, value, tb)
        pdb.post_mortem(tb)


if __name__ == "__main__":
    main()
