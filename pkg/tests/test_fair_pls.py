import unittest

import numpy as np

from fairpls.encoding import EncodingSpec, Normalization, center, encode_center
from fairpls.fair_pls import (
    FairnessMode, conditional_cross_cov, conditional_residual, correlation_ratio, eigen_regime_bound,
    eigen_regime_fit, eo_fair_pls_fit, eo_objective_grad, fair_pls_fit, fpls_objective_grad, vanilla_fair_pls)
from fairpls.metrics import cov2
from fairpls.optimize import GdParams, central_difference
from fairpls.pls import nipals_fit
from fairpls.synthetic import FEATURE_NAMES, SENSITIVE_NAME, TARGET_NAME, SyntheticParams, gen_synthetic
from fairpls.utils import DegenerateInputError, PreconditionError, SingularMatrixError

from .common import centered, random_problem, relative_error, sign_aligned


def synthetic_inputs(seed, **overrides):
    table = gen_synthetic(SyntheticParams.default(seed=seed, **overrides))
    features = table.select(FEATURE_NAMES)
    X = encode_center(features, EncodingSpec.for_dataset(features, Normalization.zero_mean_unit_variance))
    Y = center(table.values(TARGET_NAME).astype(float), scale=True)
    S = center(table.values(SENSITIVE_NAME).astype(float))
    return X, Y, S


def span_problem(seed, n=40, d=6):
    """A two-column target with the sensitive attribute inside its span."""
    X, Y, _, _ = random_problem(seed, n=n, d=d, m=2)
    S = 0.5 * Y[:, :1]
    return X, Y, S


class TestObjective(unittest.TestCase):

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            n, d = rng.integers(10, 30), rng.integers(2, 7)
            X = rng.standard_normal((n, d))
            Y = centered(rng.standard_normal((n, 2)))
            S = centered(rng.standard_normal((n, 1)))
            eta = float(rng.uniform(0, 5))
            w = rng.standard_normal(d)

            value, grad = fpls_objective_grad(w, X, Y, S, eta)
            numeric = central_difference(lambda v: fpls_objective_grad(v, X, Y, S, eta)[0], w, step=1e-6)
            assert relative_error(numeric, grad) <= 1e-5

            value, grad = eo_objective_grad(w, X, Y, S, eta, ridge=0.1)
            numeric = central_difference(lambda v: eo_objective_grad(v, X, Y, S, eta, ridge=0.1)[0], w, step=1e-6)
            assert relative_error(numeric, grad) <= 1e-5

    def test_objective_value(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        Y = np.array([[2.0], [-2.0]])
        S = np.array([[1.0], [-1.0]])
        value, grad = fpls_objective_grad(np.array([1.0, 0.0]), X, Y, S, 0.5)
        # (Y^T X w)^2 = 16, (S^T X w)^2 = 4
        assert np.isclose(value, (16.0 - 0.5 * 4.0) / 4.0)
        assert np.allclose(grad, [2.0 * (16.0 - 0.5 * 4.0) / 4.0, 0.0])


class TestFairPls(unittest.TestCase):

    def test_eta_zero_matches_nipals(self):
        rng = np.random.default_rng(7)
        for seed in range(20):
            n, d = int(rng.integers(30, 101)), int(rng.integers(3, 13))
            X, Y, S, _ = random_problem(seed, n=n, d=d)
            k = 3
            reference = nipals_fit(X, Y, k)
            model = fair_pls_fit(X, Y, S, k, 0.0)
            assert model.k == reference.k
            for h in range(k):
                w, oracle = model.W[:, h], reference.W[:, h]
                assert relative_error(sign_aligned(w, oracle), oracle) <= 1e-5

    def test_invariants(self):
        for seed in range(20):
            X, Y, S, _ = random_problem(seed, n=30, d=5)
            model = fair_pls_fit(X, Y, S, 3, 1.0)
            assert np.allclose(np.linalg.norm(model.W, axis=0), 1.0, atol=1e-8)
            gram = model.T.T @ model.T
            norms = np.sqrt(np.diag(gram))
            off = np.abs(gram - np.diag(np.diag(gram)))
            assert np.all(off <= 1e-6 * np.outer(norms, norms))
            for trace in model.diagnostics.objective_traces:
                assert np.all(np.diff(trace) >= 0)
            assert relative_error(model.transform(X), model.T) <= 1e-10

    def test_deterministic(self):
        X, Y, S, _ = random_problem(3)
        gd = GdParams(seed=5)
        a = fair_pls_fit(X, Y, S, 2, 2.0, gd)
        b = fair_pls_fit(X, Y, S, 2, 2.0, gd)
        assert np.array_equal(a.W, b.W)
        assert np.array_equal(a.T, b.T)
        assert a.diagnostics.restarts == b.diagnostics.restarts

    def test_sensitive_covariance_decreases_with_eta(self):
        etas = (0.0, 1.0, 2.0, 10.0)
        totals = np.zeros(len(etas))
        for seed in range(5):
            X, Y, S = synthetic_inputs(seed, exact_moments=False)
            for i, eta in enumerate(etas):
                model = fair_pls_fit(X, Y, S, 1, eta)
                totals[i] += cov2(model.T, S.values)
        means = totals / 5
        for before, after in zip(means, means[1:]):
            assert after <= before * (1 + 1e-6)
        assert means[-1] <= 0.1 * means[0]

    def test_sensitive_covariance_per_seed(self):
        etas = (0.0, 1.0, 2.0, 10.0)
        inversions = []
        for seed in range(20):
            X, Y, S = synthetic_inputs(seed, exact_moments=False)
            values = [cov2(fair_pls_fit(X, Y, S, 1, eta).T, S.values) for eta in etas]
            for before, after in zip(values, values[1:]):
                if after > before:
                    inversions.append((after - before) / before)
        assert len(inversions) <= 1, inversions
        assert all(excess <= 0.05 for excess in inversions)

    def test_uncorrelated_scores_give_uncorrelated_combinations(self):
        rng = np.random.default_rng(17)
        X, Y, S = synthetic_inputs(0)
        model = fair_pls_fit(X, Y, S, 3, 1.0)
        # scores with the sensitive attribute regressed out
        T = conditional_residual(model.T, S)
        assert np.allclose(T.T @ S.values / T.shape[0], 0.0, atol=1e-12)
        for _ in range(10):
            a = rng.standard_normal(3)
            assert abs(float((T @ a) @ S.values[:, 0]) / T.shape[0]) <= 1e-12

    def test_sensitive_equal_to_target(self):
        X, Y, _, _ = random_problem(11, n=60, d=6)
        S = Y.copy()
        baseline = cov2(fair_pls_fit(X, Y, S, 2, 0.0).T, S)
        penalized = cov2(fair_pls_fit(X, Y, S, 2, 1e3).T, S)
        assert penalized <= 1e-3 * baseline

    def test_zero_components_and_bad_eta(self):
        X, Y, S, _ = random_problem(2)
        model = fair_pls_fit(X, Y, S, 0, 1.0)
        assert model.k == 0
        assert model.transform(X).shape == (X.shape[0], 0)
        with self.assertRaises(ValueError):
            fair_pls_fit(X, Y, S, 1, -1.0)

    def test_truncate(self):
        X, Y, S, _ = random_problem(4)
        model = fair_pls_fit(X, Y, S, 3, 1.0)
        first = model.truncate(2)
        assert first.k == 2
        assert np.allclose(first.transform(X), model.T[:, :2])


class TestEigenRegime(unittest.TestCase):

    def test_eta_zero_matches_nipals(self):
        X, Y, S, _ = random_problem(8, n=40, d=6)
        model = eigen_regime_fit(X, Y, S, 1, 0.0)
        reference = nipals_fit(X, Y, 1)
        assert relative_error(sign_aligned(model.W[:, 0], reference.W[:, 0]), reference.W[:, 0]) <= 1e-6

    def test_matches_dense_eigenvector(self):
        for seed in range(5):
            X, Y, S = span_problem(seed)
            bound, sigma_min, sigma_max = eigen_regime_bound(Y, S)
            assert np.isfinite(bound) and sigma_min > 0 and sigma_max > 0
            eta = 0.5 * bound
            model = eigen_regime_fit(X, Y, S, 2, eta)
            B = Y @ Y.T - eta * S @ S.T
            eigvals, eigvecs = np.linalg.eigh(X.T @ B @ X)
            oracle = eigvecs[:, -1]
            assert relative_error(sign_aligned(model.W[:, 0], oracle), oracle) <= 1e-6

    def test_agrees_with_ascent(self):
        for seed in range(5):
            X, Y, S = span_problem(seed + 10)
            eta = 0.5 * eigen_regime_bound(Y, S)[0]
            closed = eigen_regime_fit(X, Y, S, 1, eta)
            ascent = fair_pls_fit(X, Y, S, 1, eta)
            w = ascent.W[:, 0]
            oracle = closed.W[:, 0]
            assert relative_error(sign_aligned(w, oracle), oracle) <= 1e-4

    def test_eta_above_bound(self):
        X, Y, S = span_problem(1)
        bound = eigen_regime_bound(Y, S)[0]
        with self.assertRaises(PreconditionError) as ctx:
            eigen_regime_fit(X, Y, S, 1, 2.0 * bound)
        details = ctx.exception.details()
        assert details["bound"] == bound
        assert "sigma_min_y" in details and "sigma_max_s" in details


class TestEqualityOfOdds(unittest.TestCase):

    def test_conditional_cross_cov_of_target_is_null(self):
        X, Y, S, _ = random_problem(5, m=2)
        value = conditional_cross_cov(Y[:, 0], S, Y)
        assert value.shape == (1, 1)
        assert np.allclose(value, 0.0, atol=1e-12)

    def test_conditional_cross_cov_matches_regression_residual(self):
        rng = np.random.default_rng(21)
        X, Y, S, _ = random_problem(14, n=80, m=3)
        S = np.hstack([S, centered(rng.standard_normal((80, 1)))])
        scores = X @ rng.standard_normal((X.shape[1], 2))
        coeffs, *_ = np.linalg.lstsq(Y, S, rcond=None)
        oracle = scores.T @ (S - Y @ coeffs) / X.shape[0]
        value = conditional_cross_cov(scores, S, Y)
        assert value.shape == (2, 2)
        assert relative_error(value, oracle) <= 1e-10

    def test_sensitive_explained_by_target_is_not_penalized(self):
        X, Y, _, _ = random_problem(15, n=60, d=6, m=2)
        S = Y @ np.array([[1.0], [-2.0]])
        penalized = eo_fair_pls_fit(X, Y, S, 2, 5.0)
        free = eo_fair_pls_fit(X, Y, S, 2, 0.0)
        reference = nipals_fit(X, Y, 2)
        for h in range(2):
            oracle = free.W[:, h]
            assert relative_error(sign_aligned(penalized.W[:, h], oracle), oracle) <= 1e-8
            assert relative_error(sign_aligned(oracle, reference.W[:, h]), reference.W[:, h]) <= 1e-5

    def test_singular_target_covariance(self):
        X, Y, S, _ = random_problem(5)
        Y = np.hstack([Y, np.zeros_like(Y)])
        with self.assertRaises(SingularMatrixError):
            conditional_residual(S, Y)
        residual = conditional_residual(S, Y, ridge=1e-3)
        assert residual.shape == S.shape

    def test_mode_and_penalty(self):
        X, Y, S, _ = random_problem(6, n=60, d=6, m=2)
        loose = eo_fair_pls_fit(X, Y, S, 1, 0.0)
        tight = eo_fair_pls_fit(X, Y, S, 1, 10.0)
        assert tight.mode == FairnessMode.equality_of_odds
        before = np.sum(conditional_cross_cov(loose.T[:, 0], S, Y) ** 2)
        after = np.sum(conditional_cross_cov(tight.T[:, 0], S, Y) ** 2)
        assert after <= before * (1 + 1e-6)

    def test_finite_difference_path(self):
        X, Y, S, _ = random_problem(9, n=40, d=5, m=2)
        analytic = eo_fair_pls_fit(X, Y, S, 2, 1.0)
        numeric = eo_fair_pls_fit(X, Y, S, 2, 1.0, finite_difference=True)
        for h in range(2):
            oracle = analytic.W[:, h]
            assert relative_error(sign_aligned(numeric.W[:, h], oracle), oracle) <= 1e-4


class TestVanilla(unittest.TestCase):

    def test_correlation_ratio(self):
        assert abs(correlation_ratio([1, 2, 3, 4], ["a", "a", "b", "b"]) - 0.8) <= 1e-12
        with self.assertRaises(DegenerateInputError):
            correlation_ratio([1, 2, 3], ["a", "a", "a"])
        with self.assertRaises(DegenerateInputError):
            correlation_ratio([1, 1, 1, 1], ["a", "a", "b", "b"])

    def test_loose_threshold_keeps_everything(self):
        X, Y, _, s = random_problem(12)
        selection = vanilla_fair_pls(X, Y, s, 3, 0.99)
        reference = nipals_fit(X, Y, 3)
        assert selection.n_selected == 3
        assert np.allclose(selection.scores, reference.T)
        assert np.allclose(selection.transform(X), reference.T)

    def test_strict_threshold_selects_nothing(self):
        X, Y, _, s = random_problem(12)
        selection = vanilla_fair_pls(X, Y, s, 3, 1e-12)
        assert selection.n_selected == 0
        assert selection.transform(X).shape == (X.shape[0], 0)
        assert np.all(selection.reconstruct(selection.transform(X)) == 0)

    def test_selection_follows_ratios(self):
        X, Y, _, s = random_problem(13)
        selection = vanilla_fair_pls(X, Y, s, 4, 0.3)
        assert np.array_equal(selection.mask, selection.ratios < 0.3)

    def test_synthetic_component_counts(self):
        X, Y, S = synthetic_inputs(0)
        groups = S.values[:, 0]
        counts = {tau: vanilla_fair_pls(X, Y, groups, 7, tau).n_selected for tau in (0.1, 0.4, 0.8)}
        assert counts[0.1] == 0
        assert abs(counts[0.4] - 6) <= 1
        assert abs(counts[0.8] - 7) <= 1
        # orthogonal scores share the squared correlation with a binary group
        ratios = vanilla_fair_pls(X, Y, groups, 7, 0.5).ratios
        assert ratios.sum() <= 1.0 + 1e-9

    def test_invalid_arguments(self):
        X, Y, _, s = random_problem(12)
        with self.assertRaises(ValueError):
            vanilla_fair_pls(X, Y, s, 2, 1.0)
        with self.assertRaises(DegenerateInputError):
            vanilla_fair_pls(X, Y, np.zeros(X.shape[0]), 2, 0.5)


if __name__ == "__main__":
    unittest.main()
