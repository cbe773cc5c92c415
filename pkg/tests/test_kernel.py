import unittest

from unittest import mock

import numpy as np

from fairpls import kernel
from fairpls.fair_pls import fair_pls_fit
from fairpls.kernel import (
    KernelKind, KernelSpec, center_cross_gram, center_gram, deflate_gram, gram, hsic, kfpls_fit, kfpls_transform,
    median_heuristic)
from fairpls.metrics import cov2
from fairpls.utils import (
    CenteringError, ConfigurationError, DegenerateInputError, DimensionMismatchError, PreconditionError)

from .common import centered, random_problem, relative_error, sign_aligned


def hsic_penalty(model, S):
    Ks = center_gram(gram(S, S, model.kernel_S)).values
    t = model.T[:, 0]
    return float(t @ Ks @ t) / t.shape[0] ** 2


class TestKernelSpec(unittest.TestCase):

    def test_forms(self):
        spec = KernelSpec.from_dict("rbf")
        assert spec.kind == KernelKind.rbf
        assert spec.bandwidth == "median"
        assert not spec.resolved
        assert KernelSpec.from_dict({"kind": "rbf", "bandwidth": 2.0}).bandwidth == 2.0
        assert KernelSpec.from_dict(spec.to_dict()) == spec
        assert KernelSpec().to_dict() == {"kind": "linear"}
        with self.assertRaises(ConfigurationError):
            KernelSpec.from_dict("polynomial")
        with self.assertRaises(ConfigurationError):
            KernelSpec(KernelKind.rbf, -1.0)

    def test_unresolved_bandwidth(self):
        X = np.eye(3)
        with self.assertRaises(ConfigurationError):
            gram(X, X, KernelSpec(KernelKind.rbf))
        resolved = KernelSpec(KernelKind.rbf).resolve(X)
        assert np.isclose(resolved.bandwidth, np.sqrt(2.0))

    def test_median_heuristic(self):
        assert median_heuristic([[0.0], [1.0], [3.0]]) == 2.0
        with self.assertRaises(DegenerateInputError):
            median_heuristic(np.ones((4, 2)))
        with self.assertRaises(DegenerateInputError):
            median_heuristic(np.ones((1, 2)))


class TestGram(unittest.TestCase):

    def test_rbf_values(self):
        X = np.array([[0.0], [1.0]])
        K = gram(X, X, KernelSpec(KernelKind.rbf, 1.0))
        assert np.allclose(K, [[1.0, np.exp(-0.5)], [np.exp(-0.5), 1.0]])
        assert np.array_equal(K, K.T)
        with self.assertRaises(DimensionMismatchError):
            gram(X, np.ones((2, 2)), KernelSpec())

    def test_center_gram(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((12, 3))
        centering = center_gram(gram(X, X, KernelSpec()))
        assert np.allclose(centering.values.sum(axis=0), 0.0)
        assert np.allclose(centering.values.sum(axis=1), 0.0)
        Xc = X - X.mean(axis=0)
        assert np.allclose(centering.values, Xc @ Xc.T)
        assert np.allclose(center_cross_gram(gram(X, X, KernelSpec()), centering), centering.values)
        with self.assertRaises(DimensionMismatchError):
            center_gram(np.ones((2, 3)))
        with self.assertRaises(PreconditionError):
            center_gram(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_hsic_of_linear_kernels(self):
        rng = np.random.default_rng(1)
        x = centered(rng.standard_normal(20))
        s = centered(rng.random(20) < 0.5)
        value = hsic(center_gram(x @ x.T), center_gram(s @ s.T))
        assert np.isclose(value, cov2(x, s))
        with self.assertRaises(CenteringError):
            hsic(np.ones((3, 3)), np.ones((3, 3)))

    def test_deflate_gram(self):
        rng = np.random.default_rng(2)
        X = centered(rng.standard_normal((10, 4)))
        K = X @ X.T
        t = K @ rng.standard_normal(10)
        D = deflate_gram(K, t)
        assert np.allclose(D @ t, 0.0)
        assert np.array_equal(D, D.T)
        with self.assertRaises(DegenerateInputError):
            deflate_gram(K, np.zeros(10))


class TestKernelFairPls(unittest.TestCase):

    def test_linear_kernel_matches_fair_pls(self):
        for seed in range(10):
            X, Y, S, s = random_problem(seed, n=30, d=5)
            primal = fair_pls_fit(X, Y, S, 2, 1.0)
            dual = kfpls_fit(X, Y, s, 2, 1.0)
            assert dual.k == primal.k == 2
            for h in range(2):
                oracle = primal.T[:, h]
                assert relative_error(sign_aligned(dual.T[:, h], oracle), oracle) <= 1e-4

    def test_constraint_and_orthogonality(self):
        X, Y, _, s = random_problem(4, n=30, d=5)
        model = kfpls_fit(X, Y, s, 3, 2.0, kernel_X=KernelSpec(KernelKind.rbf))
        K = center_gram(gram(X, X, model.kernel_X)).values
        for h in range(model.k):
            alpha = model.A[:, h]
            assert abs(alpha @ K @ alpha - 1.0) <= 1e-8
            t = model.T[:, h]
            assert t[np.argmax(np.abs(t))] > 0
        gram_t = model.T.T @ model.T
        norms = np.sqrt(np.diag(gram_t))
        off = np.abs(gram_t - np.diag(np.diag(gram_t)))
        assert np.all(off <= 1e-6 * np.outer(norms, norms))
        for trace in model.diagnostics.objective_traces:
            assert np.all(np.diff(trace) >= 0)

    def test_transform_reproduces_training_scores(self):
        X, Y, _, s = random_problem(5, n=25, d=4)
        for spec in (KernelSpec(), KernelSpec(KernelKind.rbf)):
            model = kfpls_fit(X, Y, s, 3, 1.0, kernel_X=spec)
            scores = kfpls_transform(model, X)
            assert relative_error(scores, model.T) <= 1e-8
            assert np.allclose(model.truncate(1).transform(X[:5]), scores[:5, :1])

    def test_sensitive_penalty_with_several_columns(self):
        X, Y, _, s = random_problem(6, n=40, d=5)
        rng = np.random.default_rng(6)
        S = np.column_stack([s, s + 0.3 * rng.standard_normal(40)])
        rbf = KernelSpec(KernelKind.rbf)
        loose = kfpls_fit(X, Y, S, 1, 0.0, kernel_X=rbf, kernel_S=rbf)
        tight = kfpls_fit(X, Y, S, 1, 10.0, kernel_X=rbf, kernel_S=rbf)
        assert tight.kernel_S.resolved
        assert hsic_penalty(tight, S) <= hsic_penalty(loose, S) * (1 + 1e-6)

    def test_fingerprint_mismatch(self):
        X, Y, _, s = random_problem(7, n=20, d=3)
        model = kfpls_fit(X, Y, s, 1, 1.0)
        model.verify_training_data()
        model.X_train[0, 0] += 1.0
        with self.assertRaises(PreconditionError):
            model.transform(X)

    def test_bounds(self):
        X, Y, _, s = random_problem(8, n=20, d=3)
        with self.assertRaises(DimensionMismatchError):
            kfpls_fit(X, Y, s, 21, 1.0)
        with self.assertRaises(ValueError):
            kfpls_fit(X, Y, s, 1, -1.0)
        model = kfpls_fit(X, Y, s, 0, 1.0)
        assert kfpls_transform(model, X).shape == (20, 0)
        with self.assertRaises(DimensionMismatchError):
            kfpls_transform(model, X[:, :2])

    def test_dense_size_limit(self):
        X, Y, _, s = random_problem(9, n=20, d=3)
        with mock.patch.object(kernel, "MAX_DENSE_ROWS", 10):
            with self.assertRaises(ConfigurationError):
                kfpls_fit(X, Y, s, 1, 1.0)
            model = kfpls_fit(X, Y, s, 1, 1.0, allow_large_n=True)
        assert model.k == 1


if __name__ == "__main__":
    unittest.main()
