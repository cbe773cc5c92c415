import io
import os
import tempfile
import unittest

import numpy as np

from fairpls.encoding import center, encode_center
from fairpls.fair_pls import FairnessMode, eo_fair_pls_fit, fair_pls_fit
from fairpls.kernel import KernelKind, KernelSpec, kfpls_fit
from fairpls.pls import nipals_fit
from fairpls.recipe import load_recipe, load_recipe_dataset
from fairpls.serialize import read_model, write_model
from fairpls.utils import ParseError, PreconditionError

from .common import data_path, datafile, random_problem


def toy_inputs():
    data = load_recipe_dataset(load_recipe(datafile("toy_recipe.json")), data_path)
    X = encode_center(data.features, data.feature_spec)
    y = data.target.astype(float)
    s = data.sensitive.astype(float)
    return data.features, X, center(y), center(s), s


def round_trip(model):
    buffer = io.StringIO()
    write_model(model, buffer)
    return read_model(io.StringIO(buffer.getvalue()))


class TestSerialize(unittest.TestCase):

    def test_pls_model(self):
        features, X, Y, _, _ = toy_inputs()
        model = nipals_fit(X, Y, 2)
        again = round_trip(model)
        for name in ("W", "P", "C", "B_coeffs", "T", "U"):
            assert np.array_equal(getattr(again, name), getattr(model, name))
        assert again.stats.names == model.stats.names
        assert np.array_equal(again.stats.col_scales, model.stats.col_scales)
        assert np.allclose(again.transform(again.stats.transform(features)), model.T, atol=1e-10)
        assert again.diagnostics.to_dict() == model.diagnostics.to_dict()

    def test_fair_pls_model(self):
        X, Y, S, _ = random_problem(3)
        model = eo_fair_pls_fit(X, Y, S, 2, 1.5, ridge=0.01)
        again = round_trip(model)
        assert again.mode == FairnessMode.equality_of_odds
        assert again.eta == 1.5 and again.ridge == 0.01
        for name in ("W", "Gamma", "T", "objective"):
            assert np.array_equal(getattr(again, name), getattr(model, name))
        assert again.stats is None
        assert again.diagnostics.objective_traces == model.diagnostics.objective_traces

    def test_kernel_model(self):
        _, X, Y, _, s = toy_inputs()
        model = kfpls_fit(X, Y, s, 2, 1.0, kernel_X=KernelSpec(KernelKind.rbf))
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "model.txt")
            write_model(model, path)
            again = read_model(path)
        assert again.kernel_X == model.kernel_X
        assert again.training_fingerprint == model.training_fingerprint
        for name in ("A", "T", "T_hat", "V", "X_train"):
            assert np.array_equal(getattr(again, name), getattr(model, name))
        assert np.array_equal(again.transform(X), model.transform(X))

    def test_zero_components(self):
        X, Y, S, _ = random_problem(4)
        again = round_trip(fair_pls_fit(X, Y, S, 0, 1.0))
        assert again.k == 0
        assert again.W.shape == (X.shape[1], 0)

    def test_tampered_training_data(self):
        X, Y, _, s = random_problem(5, n=20, d=3)
        buffer = io.StringIO()
        write_model(kfpls_fit(X, Y, s, 1, 1.0), buffer)
        lines = buffer.getvalue().splitlines()
        lines = [line.replace("fingerprint.sha1=", "fingerprint.sha1=0") for line in lines]
        with self.assertRaises(PreconditionError):
            read_model(io.StringIO("\n".join(lines)))

    def test_malformed_files(self):
        with self.assertRaises(ParseError):
            read_model(io.StringIO(""))
        with self.assertRaises(ParseError) as ctx:
            read_model(io.StringIO("<Model=pls>\n"))
        assert ctx.exception.row == 1
        with self.assertRaises(ParseError):
            read_model(io.StringIO("<FairPlsModel=tree>\nversion=1\n"))
        with self.assertRaises(ParseError):
            read_model(io.StringIO("<FairPlsModel=pls>\nversion=2\n"))
        with self.assertRaises(ParseError) as ctx:
            read_model(io.StringIO("<FairPlsModel=pls>\nversion=1\n<Matrix=W rows=2 cols=2>\n1 2\n3\n"))
        assert ctx.exception.row == 5
        with self.assertRaises(ParseError):
            read_model(io.StringIO("<FairPlsModel=pls>\nversion=1\nk=0\n"))


if __name__ == "__main__":
    unittest.main()
