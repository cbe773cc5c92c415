"""Example script to sweep the fairness trade-off on a dataset and print the covariances"""
import click

from fairpls import ExperimentConfig, run_experiment_a
from fairpls.recipe import list_recipes


@click.command('sweep_eta')
@click.argument('dataset', type=click.Choice(list_recipes() + ["synthetic"]))
@click.option("--data-dir", type=click.Path(file_okay=False), default=None)
@click.option("-e", "--eta", "etas", type=float, multiple=True)
@click.option("-k", "--components", type=int, default=2)
def main(dataset, data_dir=None, etas=(), components: int = 2):
    """Fit Fair PLS on DATASET for each eta and print the mean test covariances to STDOUT"""
    cfg = ExperimentConfig(dataset, eta_grid=etas or (0.0, 0.5, 1.0, 2.0, 10.0), k=components, data_dir=data_dir)
    click.echo(f"Sweeping {len(cfg.eta_grid)} values of eta on {dataset}", err=True)
    summary = run_experiment_a(cfg).summary()
    columns = ["eta", "cov2_rep_target_mean", "cov2_rep_sensitive_mean", "reconstruction_error_mean"]
    click.echo(summary[columns].to_string(index=False))


if __name__ == "__main__":
    main.main()
