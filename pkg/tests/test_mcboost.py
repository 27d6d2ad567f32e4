import numpy as np
import pytest
from numpy.testing import assert_allclose

from survcal.learners import AuditorSpec, ConstantModel, LinearModel
from survcal.mcboost import (
    AdditivePredictor,
    CalibrationConfig,
    Halt,
    audit_bucket,
    audit_statistic,
    bucket_index,
    calibrate,
    make_buckets,
    step_size,
)


def _indicator_problem(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
    theta = (X[:, 1] > 0).astype(float)
    perm = rng.permutation(n)
    return X, theta, perm[: n // 2], perm[n // 2:]


class TestBuckets:
    def test_single_bucket(self):
        b = make_buckets(np.random.default_rng(0).random(30), 1)
        assert len(b) == 1 and len(b[0]) == 30

    def test_uniform_counts(self):
        n = 5000
        pred = np.random.default_rng(1).random(n)
        sd = np.sqrt(n * 0.2 * 0.8)
        for rows in make_buckets(pred, 5, 1.0):
            assert abs(len(rows) - n / 5) < 3 * sd

    def test_boundaries(self):
        assert_allclose(bucket_index([0.0, 0.2, 0.2000001, 1.0, -0.3, 1.7], 5, 1.0),
                        [0, 0, 1, 4, 0, 4])

    def test_scaled_range(self):
        assert_allclose(bucket_index([10.0, 10.5, 50.0], 5, 50.0), [0, 1, 4])


class TestAuditBucket:
    def test_zero_residuals(self):
        X = np.column_stack([np.ones(40), np.arange(40.0)])
        h = audit_bucket(X, np.zeros(40), np.arange(40), AuditorSpec("ridge"))
        assert_allclose(h.predict(X), 0.0, atol=1e-12)

    def test_ridge_recovery_gated(self):
        rng = np.random.default_rng(2)
        X = np.column_stack([np.ones(200), rng.uniform(-0.5, 0.5, 200)])
        rows = np.arange(100)
        h = audit_bucket(X, X[:, 1].copy(), rows, AuditorSpec("ridge", lam=1e-10))
        assert_allclose(h.predict(X[rows]), X[rows, 1], atol=1e-6)
        from survcal.mcboost import Correction
        pred = np.where(np.arange(200) < 100, 0.1, 0.9)
        gated = Correction(1.0, h, 0, 5, 1.0, 1.0).h(X, pred)
        assert_allclose(gated[100:], 0.0)

    def test_tiny_bucket_constant(self):
        X = np.ones((20, 2))
        r = np.arange(20.0)
        h = audit_bucket(X, r, np.array([7]), AuditorSpec("tree", min_leaf=10))
        assert isinstance(h, ConstantModel) and h.value == 7.0

    def test_empty_bucket(self):
        with pytest.raises(ValueError):
            audit_bucket(np.ones((3, 1)), np.zeros(3), np.array([], int), AuditorSpec())


class TestCalibrate:
    def test_step_size_rule(self):
        assert step_size(0.1, 1.0) == pytest.approx(0.05)

    def test_immediate_halt_on_calibrated_base(self):
        X, theta, cal, val = _indicator_problem()
        base = LinearModel(np.zeros(3))
        pred, trace = calibrate(base, X, np.zeros_like(theta), cal, val)
        assert trace.halt is Halt.CONVERGED
        assert pred.corrections == [] and len(trace) == 1
        assert_allclose(pred.predict(X), base.predict(X))

    def test_indicator_oracle_end_to_end(self):
        X, theta, cal, val = _indicator_problem()
        cfg = CalibrationConfig(alpha=0.02, eta=0.3)
        pred, trace = calibrate(ConstantModel(0.5), X, theta, cal, val, cfg)
        assert trace.halt is Halt.CONVERGED
        assert len(pred.corrections) > 0
        assert audit_statistic(pred, X[val], theta[val], cfg, X_fit=X[cal],
                               theta_fit=theta[cal]) <= 0.02
        assert trace.final_mse < trace.records[0].mse

    def test_replay_matches_trace(self):
        X, theta, cal, val = _indicator_problem(seed=3)
        cfg = CalibrationConfig(alpha=0.02, auditor=AuditorSpec("tree", depth=2))
        pred, trace = calibrate(ConstantModel(0.3), X, theta, cal, val, cfg)
        stat = audit_statistic(pred, X[val], theta[val], cfg, X_fit=X[cal], theta_fit=theta[cal])
        assert stat == pytest.approx(trace.records[-1].audit_stat, abs=1e-12)

    def test_max_iters(self):
        X, theta, cal, val = _indicator_problem()
        cfg = CalibrationConfig(alpha=1e-9, eta=0.01, max_iters=4)
        pred, trace = calibrate(ConstantModel(0.5), X, theta, cal, val, cfg)
        assert trace.halt is Halt.MAX_ITERS
        assert len(trace) == 4 and len(pred.corrections) == 4

    def test_predictor_replays_updates(self):
        X, theta, cal, val = _indicator_problem(seed=4)
        pred, _ = calibrate(ConstantModel(0.5), X, theta, cal, val,
                            CalibrationConfig(alpha=0.02, max_iters=6))
        m = np.full(X.shape[0], 0.5)
        for c in pred.corrections:
            m = m - c.eta * c.h(X, m)
        assert_allclose(pred.predict(X), m)

    def test_global_auditors(self):
        X, theta, cal, val = _indicator_problem(seed=5)
        cfg = CalibrationConfig(alpha=0.02, global_auditors=True)
        pred, trace = calibrate(ConstantModel(0.5), X, theta, cal, val, cfg)
        assert all(c.bucket is None for c in pred.corrections)
        assert {r.bucket for r in trace.records} == {0}

    def test_errors(self):
        X, theta, cal, val = _indicator_problem()
        with pytest.raises(ValueError, match="validation"):
            calibrate(ConstantModel(0.5), X, theta, cal, [])
        with pytest.raises(ValueError, match="overlap"):
            calibrate(ConstantModel(0.5), X, theta, cal, cal[:5])

    def test_trace_csv(self):
        X, theta, cal, val = _indicator_problem()
        _, trace = calibrate(ConstantModel(0.5), X, theta, cal, val)
        lines = trace.to_csv().splitlines()
        assert lines[0] == "iteration,bucket,delta,audit_stat,mse"
        assert len(lines) == len(trace) + 1


class TestAuditStatistic:
    def test_perfect_fit_is_zero(self):
        X, theta, _, _ = _indicator_problem()
        oracle = AdditivePredictor(type("M", (), {"predict": lambda self, Z: (Z[:, 1] > 0) * 1.0})())
        assert audit_statistic(oracle, X, theta) == pytest.approx(0.0, abs=1e-12)

    def test_permutation_invariant(self):
        X, theta, _, _ = _indicator_problem()
        base = ConstantModel(0.4)
        perm = np.random.default_rng(9).permutation(len(theta))
        a = audit_statistic(base, X, theta)
        b = audit_statistic(base, X[perm], theta[perm])
        assert a == pytest.approx(b, rel=1e-9)
