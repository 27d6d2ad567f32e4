import numpy as np
import pytest
from numpy.testing import assert_allclose

from survcal.datagen import (
    OMEGA_1,
    CensoringSpec,
    HazardSpec,
    ScenarioSpec,
    assign_domains,
    censoring_strata,
    gen_censoring,
    gen_covariates,
    gen_failure_aft,
    gen_failure_weibull,
    generate_cohort,
    membership_probs,
    true_survival,
)


def test_covariates_deterministic_and_shaped():
    a, b = gen_covariates(500, 4), gen_covariates(500, 4)
    assert a.shape == (500, 5) and np.array_equal(a, b)
    assert np.all(a[:, 0] == 1)
    assert set(np.unique(a[:, 3])) <= {0.0, 1.0}


def test_failure_monotone_in_linear_predictor():
    n = 20000
    X0 = np.zeros((n, 5))
    X1 = X0.copy()
    X1[:, 0] = 1.0
    coef = (1.0, 0, 0, 0, 0)
    t0 = gen_failure_weibull(X0, coef=coef, seed=1)
    t1 = gen_failure_weibull(X1, coef=coef, seed=1)
    assert np.mean(t1 > 30) < np.mean(t0 > 30)


def test_failure_seed_determinism():
    X = gen_covariates(100, 0)
    assert np.array_equal(gen_failure_weibull(X, seed=3), gen_failure_weibull(X, seed=3))
    assert np.array_equal(gen_failure_aft(X, seed=3), gen_failure_aft(X, seed=3))


def test_uniform_censoring_mean():
    c = gen_censoring(np.zeros((100000, 5)), CensoringSpec(), seed=2)
    assert abs(c.mean() - 60) < 0.5
    assert np.array_equal(c, gen_censoring(np.zeros((100000, 5)), CensoringSpec(), seed=2))


def test_weibull_censoring_fraction_reported():
    X = gen_covariates(20000, 3)
    T = gen_failure_weibull(X, seed=3)
    C = gen_censoring(X, CensoringSpec(kind="weibull"), seed=3)
    frac = np.mean(C < T)
    print(f"dependent-censoring fraction {frac:.3f}")
    assert 0.1 < frac < 0.7


def test_null_shift_half():
    X = gen_covariates(100000, 5)
    labels, p = assign_domains(X, [np.zeros(5)], 1.0, seed=5)
    assert_allclose(p[:, 0], 0.5)
    assert abs(np.mean(labels == "source") - 0.5) < 0.01


def test_q_scales_log_odds():
    X = gen_covariates(50, 6)
    for mech in ("softmax", "pairwise"):
        p1 = membership_probs(X, [OMEGA_1], 1.0, mech)
        p2 = membership_probs(X, [OMEGA_1], 2.0, mech)
        logit = lambda p: np.log(p[:, 0] / p[:, 1])
        assert_allclose(logit(p2), 2 * logit(p1), atol=1e-10)


def test_shift_direction():
    X = gen_covariates(100000, 7)
    labels, _ = assign_domains(X, [OMEGA_1], 3.0, seed=7)
    s, t = labels == "source", labels == "target"
    assert X[t, 3].mean() > X[s, 3].mean()
    assert X[t, 4].mean() > X[s, 4].mean()


def test_multisource_probabilities():
    X = gen_covariates(1000, 8)
    om = [OMEGA_1, (0, 0.4, 0.9, -0.5, -0.9)]
    for mech in ("softmax", "pairwise"):
        p = membership_probs(X, om, 1.0, mech)
        assert p.shape == (1000, 3)
        assert_allclose(p.sum(axis=1), 1.0)
        assert np.all(p >= 0)
    labels, _ = assign_domains(X, om, 1.0, seed=8)
    assert set(labels) <= {"source1", "source2", "target"}


def test_true_survival_weibull_closed_form():
    X = np.zeros((1, 5))
    assert true_survival(X, HazardSpec(), 19.0)[0] == pytest.approx(np.exp(-1e-4 * 19.0 ** 3))
    aft = HazardSpec(kind="lognormal_aft")
    assert true_survival(X, aft, np.exp(3.5))[0] == pytest.approx(0.5)


def test_cohort_and_digest():
    spec = ScenarioSpec(n_total=300)
    a, b = generate_cohort(spec, 11), generate_cohort(spec, 11)
    assert np.array_equal(a.dataset.observed_time, b.dataset.observed_time)
    assert np.array_equal(a.dataset.observed_time,
                          np.minimum(a.truth.failure_time, a.truth.censoring_time))
    assert ScenarioSpec.from_dict(spec.to_dict()) == spec
    assert spec.digest() == ScenarioSpec.from_dict(spec.to_dict()).digest()
    assert ScenarioSpec(q=2.5).nonstandard_q and not spec.nonstandard_q
    with pytest.raises(ValueError):
        ScenarioSpec(assignment="other")


def test_censoring_strata_finite():
    X = gen_covariates(2000, 12)
    s = censoring_strata(X)
    assert 1 < len(set(s)) <= 64
