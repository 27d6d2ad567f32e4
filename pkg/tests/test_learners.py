import numpy as np
import pytest
from numpy.testing import assert_allclose

from survcal.learners import (
    AuditorSpec,
    fit_forest,
    fit_logistic,
    fit_ols,
    fit_ridge,
    fit_tree,
)


def _design(n, d, seed):
    rng = np.random.default_rng(seed)
    return np.column_stack([np.ones(n), rng.standard_normal((n, d - 1))]), rng


class TestOls:
    def test_interpolation(self):
        m = fit_ols([[1, 0], [1, 1]], [0, 1])
        assert_allclose(m.weights, [0, 1], atol=1e-12)

    def test_noiseless_recovery(self):
        X, _ = _design(50, 4, 0)
        w = np.array([0.5, -1.0, 2.0, 0.25])
        assert_allclose(fit_ols(X, X @ w).weights, w, atol=1e-8)

    def test_first_order_optimality(self):
        X, rng = _design(200, 5, 1)
        y = rng.standard_normal(200)
        w = fit_ols(X, y).weights
        assert np.linalg.norm(X.T @ (X @ w - y)) < 1e-6

    def test_rank_deficient(self):
        X = np.ones((5, 2))
        y = np.arange(5.0)
        with pytest.raises(np.linalg.LinAlgError):
            fit_ols(X, y, ridge_fallback=False)
        assert np.all(np.isfinite(fit_ols(X, y).weights))


class TestRidge:
    def test_small_lambda_matches_ols(self):
        X, rng = _design(100, 4, 2)
        y = rng.standard_normal(100)
        assert_allclose(fit_ridge(X, y, 1e-8).weights, fit_ols(X, y).weights, atol=1e-5)

    def test_large_lambda_shrinks_to_mean(self):
        X, rng = _design(100, 4, 3)
        y = rng.standard_normal(100) + 3
        w = fit_ridge(X, y, 1e8).weights
        assert abs(w[0] - y.mean()) < 1e-4
        assert np.all(np.abs(w[1:]) < 1e-4)

    def test_normal_equations(self):
        X, rng = _design(80, 4, 4)
        y = rng.standard_normal(80)
        lam = 2.5
        w = fit_ridge(X, y, lam).weights
        pen = np.diag([0.0, lam, lam, lam])
        assert np.linalg.norm((X.T @ X + pen) @ w - X.T @ y) < 1e-8

    def test_lambda_positive(self):
        with pytest.raises(ValueError):
            fit_ridge(np.ones((3, 1)), np.zeros(3), 0.0)


class TestLogistic:
    def test_symmetric_intercept(self):
        x = np.linspace(-2, 2, 200)
        X = np.column_stack([np.ones(200), x])
        y = np.tile([True, False], 100)
        assert abs(fit_logistic(X, y).weights[0]) < 1e-3

    def test_consistency(self):
        X, rng = _design(50000, 3, 5)
        w = np.array([-0.3, 1.0, -0.7])
        y = rng.random(50000) < 1 / (1 + np.exp(-X @ w))
        m = fit_logistic(X, y)
        assert np.all(np.abs(m.weights - w) < 0.05)
        assert not m.separated

    def test_degenerate_labels(self):
        with pytest.raises(ValueError, match="degenerate"):
            fit_logistic(np.ones((4, 1)), [True] * 4)

    def test_separable_flagged(self):
        X = np.column_stack([np.ones(6), [-3, -2, -1, 1, 2, 3]])
        m = fit_logistic(X, [False, False, False, True, True, True])
        assert m.separated
        assert np.all(np.isfinite(m.weights))


class TestTree:
    def test_constant_target(self):
        X, _ = _design(40, 3, 6)
        t = fit_tree(X, np.full(40, 2.5), max_depth=3, min_leaf=2)
        assert len(t.feature) == 1
        assert_allclose(t.predict(X), 2.5)

    def test_one_split_oracle(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((400, 3))
        y = (X[:, 0] > 0).astype(float)
        t = fit_tree(X, y, max_depth=1, min_leaf=5)
        assert t.feature[0] == 0
        assert abs(t.threshold[0]) < 0.05
        assert_allclose(sorted(t.value[[t.left[0], t.right[0]]]), [0, 1])

    def test_depth_nesting(self):
        X, rng = _design(300, 4, 8)
        y = rng.standard_normal(300)
        mse = [np.mean((fit_tree(X, y, d, 5).predict(X) - y) ** 2) for d in (1, 2, 3)]
        assert mse[0] >= mse[1] >= mse[2]

    def test_min_leaf_respected(self):
        X, rng = _design(100, 3, 9)
        t = fit_tree(X, rng.standard_normal(100), max_depth=6, min_leaf=7)
        assert t.n_samples[t.feature < 0].min() >= 7
        assert t.depth <= 6


class TestForest:
    def test_single_row(self):
        f = fit_forest(np.array([[1.0, 2.0]]), np.array([4.0]), n_trees=1, mtry=2, min_leaf=1)
        assert_allclose(f.predict(np.array([[0.0, 0.0]])), 4.0)

    def test_determinism(self):
        X, rng = _design(150, 5, 10)
        y = rng.standard_normal(150)
        a = fit_forest(X, y, n_trees=15, seed=3).predict(X)
        b = fit_forest(X, y, n_trees=15, seed=3).predict(X)
        assert np.array_equal(a, b)
        c = fit_forest(X, y, n_trees=15, seed=4).predict(X)
        assert not np.array_equal(a, c)

    def test_beats_mean_predictor(self):
        X, rng = _design(300, 5, 11)
        y = X[:, 1] + rng.standard_normal(300)
        p = fit_forest(X, y, n_trees=20, seed=0).predict(X)
        assert np.mean((p - y) ** 2) <= np.var(y)


def test_auditor_spec():
    X, rng = _design(60, 3, 12)
    y = rng.standard_normal(60)
    assert AuditorSpec("ridge", lam=1e-8).fit(X, y).predict(X).shape == (60,)
    assert AuditorSpec("tree", depth=1, min_leaf=5).fit(X, y).depth <= 1
    with pytest.raises(ValueError):
        AuditorSpec("boost")
