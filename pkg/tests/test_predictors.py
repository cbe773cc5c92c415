import os
import tempfile
import unittest

import numpy as np

from fairpls.predictors import (
    GlmFamily, GlmModel, glm_fit, glm_predict, load_external_predictions, load_external_representation,
    write_representation)
from fairpls.utils import DimensionMismatchError, ParseError, SingularMatrixError

from .common import datafile


class TestGlm(unittest.TestCase):

    def test_linear_recovers_coefficients(self):
        rng = np.random.default_rng(0)
        T = rng.standard_normal((40, 2))
        y = 2.0 + T @ np.array([1.0, -3.0])
        model = glm_fit(T, y, GlmFamily.linear, ridge=0.0)
        assert np.allclose(model.coefficients, [1.0, -3.0], atol=1e-10)
        assert abs(model.intercept - 2.0) <= 1e-10
        assert np.allclose(model.predict(T), y)

    def test_logistic_stationarity(self):
        rng = np.random.default_rng(1)
        T = rng.standard_normal((200, 2))
        p = 1.0 / (1.0 + np.exp(-(0.5 + T @ np.array([1.5, -1.0]))))
        y = (rng.random(200) < p).astype(float)
        model = glm_fit(T, y, ridge=1e-3)
        assert model.diagnostics.converged
        trace = np.array(model.diagnostics.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12)
        Z = np.hstack([np.ones((200, 1)), T])
        beta = np.r_[model.intercept, model.coefficients]
        grad = Z.T @ (glm_predict(model, T) - y) + np.r_[0.0, 1e-3 * model.coefficients]
        assert np.max(np.abs(grad)) <= 1e-6
        prob = model.predict(T)
        assert np.all((prob > 0) & (prob < 1))
        assert beta.shape == (3,)

    def test_logistic_needs_binary_target(self):
        with self.assertRaises(ValueError):
            glm_fit(np.ones((5, 1)), [0, 1, 2, 0, 1])

    def test_singular_system(self):
        rng = np.random.default_rng(2)
        t = rng.standard_normal(10)
        T = np.column_stack([t, t])
        with self.assertRaises(SingularMatrixError):
            glm_fit(T, t, GlmFamily.linear, ridge=0.0)
        model = glm_fit(T, t, GlmFamily.linear, ridge=1e-3)
        assert model.k == 2

    def test_dimension_checks(self):
        with self.assertRaises(DimensionMismatchError):
            glm_fit(np.ones((2, 2)), [0.0, 1.0], GlmFamily.linear)
        model = GlmModel(np.array([1.0]), 0.0, GlmFamily.linear)
        with self.assertRaises(DimensionMismatchError):
            model.predict(np.ones((3, 2)))
        with self.assertRaises(ValueError):
            GlmModel(np.array([np.nan]), 0.0, GlmFamily.linear)


class TestExternalFiles(unittest.TestCase):

    def test_predictions_are_reordered(self):
        values = load_external_predictions(datafile("predictions.csv"), [0, 1, 2])
        assert values.tolist() == [0.25, 0.5, 0.75]
        values = load_external_predictions(datafile("predictions.csv"), [2, 0, 1])
        assert values.tolist() == [0.75, 0.25, 0.5]

    def test_duplicated_row_id(self):
        with self.assertRaises(ParseError) as ctx:
            load_external_predictions(datafile("duplicate_ids.csv"), [0, 1])
        assert ctx.exception.details() == {"row": 4, "column": "row_id"}

    def test_row_set_must_match(self):
        with self.assertRaises(ParseError):
            load_external_predictions(datafile("predictions.csv"), [0, 1, 2, 3])
        with self.assertRaises(ParseError):
            load_external_predictions(datafile("predictions.csv"), [0, 1])

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_external_predictions(os.path.join(tempfile.gettempdir(), "no-such-predictions.csv"), [0])

    def test_malformed_values(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "bad.csv")
            with open(path, "wt") as fh:
                fh.write("row_id,yhat\n0,0.5\n1,high\n")
            with self.assertRaises(ParseError) as ctx:
                load_external_predictions(path, [0, 1])
            assert ctx.exception.details() == {"row": 3, "column": "yhat"}
            with open(path, "wt") as fh:
                fh.write("id,yhat\n0,0.5\n")
            with self.assertRaises(ParseError):
                load_external_predictions(path, [0])

    def test_representation_round_trip(self):
        scores = np.array([[0.5, -1.0], [1.25, 2.0], [-3.0, 0.125]])
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "rep.csv")
            write_representation(path, scores, [5, 3, 4])
            loaded, names = load_external_representation(path, [3, 4, 5])
        assert names == ["t1", "t2"]
        assert np.array_equal(loaded, scores[[1, 2, 0]])
        with self.assertRaises(DimensionMismatchError):
            write_representation(path, scores, [1, 2])


if __name__ == "__main__":
    unittest.main()
