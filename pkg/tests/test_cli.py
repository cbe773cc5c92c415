import json
import os
import tempfile
import unittest

import pandas as pd

from click.testing import CliRunner

from fairpls.tools import cli

from .common import data_path, datafile


def write_config(directory, **values):
    state = {"dataset": "synthetic", "synthetic": {"n_per_group": 60}, "out_dir": directory}
    state.update(values)
    path = os.path.join(directory, "config.json")
    with open(path, "wt") as fh:
        json.dump(state, fh)
    return path


class TestCommandLine(unittest.TestCase):

    def setUp(self):
        self.runner = CliRunner()
        self.tmpdir = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmpdir.cleanup)
        self.dir = self.tmpdir.name

    def invoke(self, *args):
        return self.runner.invoke(cli.main, [str(a) for a in args], catch_exceptions=False)

    def test_synth_gen(self):
        outpath = os.path.join(self.dir, "synthetic.csv")
        result = self.invoke("synth-gen", outpath, "--seed", 4)
        assert result.exit_code == 0, result.output
        table = pd.read_csv(outpath)
        assert len(table) == 1000
        assert {"x0", "s", "y"} <= set(table.columns)

    def test_experiment_a_and_audit(self):
        config = write_config(self.dir, eta_grid=[0, 1], n_splits=2)
        result = self.invoke("experiment-a", "-c", config)
        assert result.exit_code == 0, result.output
        rows = os.path.join(self.dir, "synthetic_fair-pls_rows.csv")
        assert os.path.exists(rows)
        assert len(pd.read_csv(rows)) == 4
        assert os.path.exists(os.path.join(self.dir, "synthetic_fair-pls_timings.csv"))
        result = self.invoke("self-audit", rows, "--leakage", "-c", config)
        assert result.exit_code == 0, result.output
        assert '"ok": true' in result.output

    def test_options_override_config(self):
        config = write_config(self.dir, eta_grid=[0])
        result = self.invoke("experiment-b", "-c", config, "-e", 0.5, "-e", 2, "--k-folds", 3, "-k", 1)
        assert result.exit_code == 0, result.output
        rows = pd.read_csv(os.path.join(self.dir, "synthetic_fair-pls_rows.csv"))
        assert rows["eta"].tolist() == [0.5] * 3 + [2.0] * 3
        assert (rows["k"] == 1).all()

    def test_fit_transform_eval(self):
        config = write_config(self.dir)
        model_path = os.path.join(self.dir, "model.txt")
        result = self.invoke("fit", "-c", config, "-e", 1.0, model_path)
        assert result.exit_code == 0, result.output
        scores_path = os.path.join(self.dir, "scores.csv")
        result = self.invoke("transform", model_path, "synthetic", scores_path)
        assert result.exit_code == 0, result.output
        scores = pd.read_csv(scores_path)
        assert list(scores.columns) == ["row_id", "t1", "t2"]
        assert scores["row_id"].tolist() == list(range(len(scores)))
        result = self.invoke("eval", scores_path, "synthetic")
        assert result.exit_code == 0, result.output
        assert '"cov2_rep_sensitive"' in result.output

    def test_fit_refuses_vanilla(self):
        result = self.invoke("fit", "--dataset", "synthetic", "-m", "vanilla", os.path.join(self.dir, "m.txt"))
        assert result.exit_code == 2
        assert '"error": "ConfigurationError"' in result.output

    def test_invalid_config_reports_json(self):
        config = write_config(self.dir, eta_grid=[-1])
        result = self.invoke("experiment-a", "-c", config)
        assert result.exit_code == 2
        assert '"error": "ConfigurationError"' in result.output
        assert '"details"' in result.output

    def test_missing_dataset(self):
        result = self.invoke("experiment-a")
        assert result.exit_code != 0

    def test_bias(self):
        result = self.invoke("bias", datafile("toy_recipe.json"), "--data-dir", data_path)
        assert result.exit_code == 0, result.output
        assert '"task": "classification"' in result.output
        assert '"n": 7' in result.output


if __name__ == "__main__":
    unittest.main()
