import math
import unittest

import numpy as np

from fairpls.kernel import kfpls_fit
from fairpls.metrics import (
    FairnessReport, accuracy, cov2, dataset_bias, disparate_impact, eopp_ratio, evaluate_representation, ks_statistic,
    mean_squared_error, reconstruction_error)
from fairpls.pls import nipals_fit
from fairpls.utils import DegenerateInputError, DimensionMismatchError, UndefinedMetricError

from .common import random_problem


def group_predictions(n0, k0, n1, k1):
    """``k0`` positives among ``n0`` unprivileged rows, then ``k1`` among ``n1`` privileged rows."""
    yhat = np.r_[np.ones(k0), np.zeros(n0 - k0), np.ones(k1), np.zeros(n1 - k1)]
    s = np.r_[np.zeros(n0), np.ones(n1)]
    return yhat, s


class TestDisparateImpact(unittest.TestCase):

    def test_half_ratio(self):
        yhat, s = group_predictions(10, 4, 10, 8)
        result = disparate_impact(yhat, s)
        assert abs(result.di - 0.5) <= 1e-12
        half = 1.959963984540054 * math.sqrt(0.6 / 4 + 0.2 / 8)
        assert abs(result.ci_lo - 0.5 * math.exp(-half)) <= 1e-9
        assert abs(result.ci_hi - 0.5 * math.exp(half)) <= 1e-9
        assert not result.degenerate

    def test_interval_narrows_with_alpha(self):
        yhat, s = group_predictions(50, 20, 50, 30)
        wide = disparate_impact(yhat, s, alpha=0.01)
        narrow = disparate_impact(yhat, s, alpha=0.2)
        assert wide.ci_lo < narrow.ci_lo < narrow.di < narrow.ci_hi < wide.ci_hi

    def test_degenerate_groups(self):
        yhat, s = group_predictions(10, 0, 10, 5)
        result = disparate_impact(yhat, s)
        assert tuple(result) == (0.0, 0.0, 0.0)
        assert result.degenerate
        yhat, s = group_predictions(10, 5, 10, 0)
        with self.assertRaises(UndefinedMetricError):
            disparate_impact(yhat, s)
        with self.assertRaises(UndefinedMetricError):
            disparate_impact([1, 0, 1], [1, 1, 1])

    def test_input_checks(self):
        with self.assertRaises(ValueError):
            disparate_impact([0.5, 1.0], [0, 1])
        with self.assertRaises(DimensionMismatchError):
            disparate_impact([0, 1, 1], [0, 1])


class TestOtherMetrics(unittest.TestCase):

    def test_ks_statistic(self):
        yhat = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9]
        s = [0, 0, 0, 1, 1, 1]
        assert ks_statistic(yhat, s) == 1.0
        assert ks_statistic([0.1, 0.2, 0.1, 0.2], [0, 0, 1, 1]) == 0.0

    def test_eopp_ratio(self):
        y = [1, 1, 1, 1, 1, 1, 1, 1]
        s = [0, 0, 0, 0, 1, 1, 1, 1]
        yhat = [1, 0, 0, 0, 1, 1, 0, 0]
        assert eopp_ratio(yhat, y, s) == 0.5
        with self.assertRaises(UndefinedMetricError):
            eopp_ratio(yhat, y, [0, 0, 0, 0, 0, 0, 0, 0])
        with self.assertRaises(UndefinedMetricError):
            eopp_ratio([1, 1, 1, 1, 0, 0, 0, 0], y, s)

    def test_accuracy_and_mse(self):
        assert accuracy([1, 0, 1, 1], [1, 1, 1, 0]) == 0.5
        assert mean_squared_error([1.0, 2.0], [0.0, 4.0]) == 2.5

    def test_cov2(self):
        T = np.array([[1.0, 0.0], [-1.0, 2.0], [0.0, -2.0], [0.0, 0.0]])
        Z = np.array([1.0, -1.0, 0.0, 0.0])
        # covariances 2/4 and -2/4
        assert np.isclose(cov2(T, Z), 0.5)
        assert np.isclose(cov2(T + 3.0, Z + 1.0), 0.5)
        assert cov2(np.zeros((4, 0)), Z) == 0.0


class TestReports(unittest.TestCase):

    def test_reconstruction_error(self):
        X, Y, _, _ = random_problem(1, n=30, d=4)
        model = nipals_fit(X, Y, 2)
        error = reconstruction_error(X, model)
        assert 0.0 < error < 1.0
        assert reconstruction_error(X, model.truncate(0)) == 1.0
        with self.assertRaises(DegenerateInputError):
            reconstruction_error(np.zeros((3, 2)), model.truncate(0))

    def test_evaluate_representation(self):
        X, Y, S, s = random_problem(2, n=30, d=4)
        model = nipals_fit(X, Y, 2)
        report = evaluate_representation(model, X, Y, S)
        assert np.isclose(report.cov2_rep_target, cov2(model.T, Y))
        assert np.isclose(report.cov2_rep_sensitive, cov2(model.T, S))
        assert 0.0 < report.reconstruction_error < 1.0
        assert math.isnan(report.di)
        dual = kfpls_fit(X, Y, s, 2, 0.0)
        assert math.isnan(evaluate_representation(dual, X, Y, S).reconstruction_error)

    def test_report_bounds(self):
        with self.assertRaises(ValueError):
            FairnessReport(di=0.5, di_ci_lo=0.6, di_ci_hi=0.9)
        with self.assertRaises(ValueError):
            FairnessReport(ks=1.5)
        assert "cov2_rep_target" in FairnessReport.fields()

    def test_dataset_bias(self):
        yhat, s = group_predictions(10, 4, 10, 8)
        report = dataset_bias(yhat, s)
        assert abs(report.di - 0.5) <= 1e-12
        assert math.isnan(report.ks)
        report = dataset_bias([0.1, 0.2, 0.3, 0.7, 0.8, 0.9], [0, 0, 0, 1, 1, 1], task="regression")
        assert report.ks == 1.0
        with self.assertRaises(ValueError):
            dataset_bias(yhat, s, task="ranking")


if __name__ == "__main__":
    unittest.main()
