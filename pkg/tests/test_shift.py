import numpy as np
import pytest
from numpy.testing import assert_allclose

from survcal.datagen import OMEGA_1, OMEGA_2, assign_domains, gen_covariates
from survcal.shift import (
    fit_propensity,
    ipsw_estimate,
    ipsw_multisource,
    ipsw_subgroup,
    naive_estimate,
)


def test_two_point_toy():
    assert ipsw_estimate([0.0, 1.0], weights=[1.0, 3.0]) == pytest.approx(0.75)


def test_unit_weights_are_naive():
    theta = np.random.default_rng(0).random(30)
    assert ipsw_estimate(theta, weights=np.ones(30)) == pytest.approx(naive_estimate(theta))


def test_null_shift_odds_near_one():
    X = gen_covariates(10000, 1)
    m = fit_propensity(X[:5000], X[5000:])
    assert np.mean(np.abs(m.odds(X[:5000]) - 1)) < 0.1


def test_coefficient_recovery():
    X = gen_covariates(50000, 2)
    labels, _ = assign_domains(X, [OMEGA_1], 1.0, seed=2)
    src = labels == "source"
    m = fit_propensity(X[src], X[~src])
    assert np.all(np.abs(m.models[0].weights - np.asarray(OMEGA_1)) < 0.1)


def test_label_free_single_covariate():
    rng = np.random.default_rng(3)
    X = np.column_stack([np.ones(4000), rng.standard_normal(4000)])
    m = fit_propensity(X[:2000], X[2000:])
    assert np.ptp(m.odds(X)) < 0.5


def test_constant_covariate_dropped():
    rng = np.random.default_rng(4)
    X = np.column_stack([np.ones(200), rng.standard_normal(200), np.zeros(200)])
    m = fit_propensity(X[:100], X[100:])
    assert list(m.columns) == [True, True, False]


def test_weight_overflow():
    with pytest.raises(OverflowError):
        ipsw_estimate([1.0, 2.0], weights=[1.0, 1e13])


class TestSubgroup:
    def _data(self, seed=5):
        X = gen_covariates(8000, seed)
        labels, _ = assign_domains(X, [OMEGA_1], 1.0, seed=seed)
        src = labels == "source"
        theta = np.random.default_rng(seed).random(src.sum())
        return X[src], X[~src], theta

    def test_single_group_equals_pooled(self):
        Xs, Xt, theta = self._data()
        out = ipsw_subgroup(theta, Xs, np.zeros(len(Xs)), Xt, np.zeros(len(Xt)))
        pooled = ipsw_estimate(theta, Xs, fit_propensity(Xs, Xt))
        assert out[0.0] == pytest.approx(pooled)

    def test_convex_combination_with_shared_model(self):
        Xs, Xt, theta = self._data(6)
        w = fit_propensity(Xs, Xt).odds(Xs)
        g = Xs[:, 3] == 1
        parts = [ipsw_estimate(theta[m], weights=w[m]) for m in (g, ~g)]
        share = w[g].sum() / w.sum()
        assert ipsw_estimate(theta, weights=w) == pytest.approx(
            share * parts[0] + (1 - share) * parts[1])

    def test_identical_groups_agree(self):
        Xs, Xt, theta = self._data(7)
        gs = np.arange(len(Xs)) % 2
        gt = np.arange(len(Xt)) % 2
        out = ipsw_subgroup(theta, Xs, gs, Xt, gt)
        pooled = ipsw_estimate(theta, Xs, fit_propensity(Xs, Xt))
        assert abs(out[0] - pooled) < 0.03 and abs(out[1] - pooled) < 0.03

    def test_empty_target_group(self):
        Xs, Xt, theta = self._data()
        with pytest.raises(ValueError, match="empty target subgroup"):
            ipsw_subgroup(theta, Xs, np.zeros(len(Xs)), Xt, np.ones(len(Xt)))


class TestMultisource:
    def test_duplicate_sources(self):
        X = gen_covariates(12000, 8)
        labels, _ = assign_domains(X, [OMEGA_1], 1.0, seed=8)
        src = np.flatnonzero(labels == "source")
        tgt = labels == "target"
        theta = np.random.default_rng(8).random(len(src)) + X[src, 1] * 0.1
        half = len(src) // 2
        a, b = src[:half], src[half:]
        multi = ipsw_multisource([theta[:half], theta[half:]], [X[a], X[b]], X[tgt])
        single = ipsw_estimate(theta, X[src], fit_propensity(X[src], X[tgt]))
        assert abs(multi - single) < 0.01

    def test_empty_source(self):
        X = gen_covariates(100, 9)
        with pytest.raises(ValueError):
            ipsw_multisource([np.ones(50), np.ones(0)], [X[:50], X[:0]], X[50:])

    def test_needs_two(self):
        X = gen_covariates(100, 9)
        with pytest.raises(ValueError):
            ipsw_multisource([np.ones(50)], [X[:50]], X[50:])
