"""Boosting a base predictor towards multicalibration against pseudo-observations.

Each round buckets the current predictions into ``m`` equal-width bins on
``[0, upper]``, fits one auditor per bucket to the residuals
``prediction - pseudo`` on the calibration rows, scores every candidate on the
validation rows and subtracts ``eta`` times the most correlated one. The loop
stops once no bucket shows residual correlation above ``alpha``.
"""

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np

from survcal.learners import AuditorSpec, ConstantModel


class Halt(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"


def step_size(alpha, bound_h=1.0):
    """Step size ``alpha / (2 C_H^2)`` that makes every accepted update reduce squared loss."""
    if not alpha > 0 or not bound_h > 0:
        raise ValueError("alpha and bound_h must be positive")
    return alpha / (2.0 * bound_h * bound_h)


@dataclass(frozen=True)
class CalibrationConfig:
    """Settings for :func:`calibrate`.

    ``alpha`` and ``bound_h`` (the auditor clamp ``C_H``) default to
    ``0.02 * upper`` and ``upper`` once the functional's range is known.
    """

    alpha: float | None = None
    eta: float = 0.3
    n_buckets: int = 5
    max_iters: int = 200
    auditor: AuditorSpec = field(default_factory=AuditorSpec)
    bound_h: float | None = None
    clip: tuple[float, float] | None = None
    global_auditors: bool = False

    def __post_init__(self):
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.n_buckets < 1 or self.max_iters < 1:
            raise ValueError("n_buckets and max_iters must be at least 1")

    def resolved(self, upper):
        alpha = 0.02 * upper if self.alpha is None else self.alpha
        bound_h = float(upper) if self.bound_h is None else self.bound_h
        return alpha, bound_h


def bucket_index(pred, m, upper):
    """Zero-based bucket of each prediction.

    Bucket ``k`` covers ``((k)C/m, (k+1)C/m]``; the first bucket also takes 0.
    Values outside ``[0, C]`` go to the nearest end bucket.
    """
    edges = upper * np.arange(1, m) / m
    return np.searchsorted(edges, np.asarray(pred, dtype=np.float64), side="left")


def make_buckets(pred, m, upper=1.0):
    """Index sets ``S_1..S_m`` of the prediction buckets (possibly empty)."""
    if m < 1:
        raise ValueError("need at least one bucket")
    k = bucket_index(pred, m, upper)
    return [np.flatnonzero(k == j) for j in range(m)]


@dataclass(frozen=True)
class Correction:
    """One accepted update ``-eta * h``.

    ``h`` is the auditor clamped to ``[-bound_h, bound_h]`` and, unless
    ``bucket`` is None, zeroed wherever the current prediction falls outside
    that bucket.
    """

    eta: float
    auditor: object
    bucket: int | None
    n_buckets: int
    upper: float
    bound_h: float

    def h(self, X, current):
        out = np.clip(self.auditor.predict(X), -self.bound_h, self.bound_h)
        if self.bucket is not None:
            out = out * (bucket_index(current, self.n_buckets, self.upper) == self.bucket)
        return out


@dataclass
class AdditivePredictor:
    """``base(x)`` followed by the stored corrections, applied in order."""

    base: object
    corrections: list = field(default_factory=list)
    upper: float = 1.0
    range_clip: tuple[float, float] | None = None

    def predict(self, X, clip=True):
        m = np.asarray(self.base.predict(X), dtype=np.float64)
        for c in self.corrections:
            m = m - c.eta * c.h(X, m)
        if clip and self.range_clip is not None:
            m = np.clip(m, *self.range_clip)
        return m


@dataclass(frozen=True)
class AuditRecord:
    iteration: int
    bucket: int
    delta: float
    audit_stat: float
    mse: float


@dataclass
class AuditTrace:
    records: list = field(default_factory=list)
    halt: Halt = Halt.MAX_ITERS
    final_mse: float = float("nan")

    def __len__(self):
        return len(self.records)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "bucket", "delta", "audit_stat", "mse"])
        for r in self.records:
            w.writerow([r.iteration, r.bucket + 1, repr(r.delta), repr(r.audit_stat), repr(r.mse)])
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return None


def audit_bucket(X, residuals, rows, auditor):
    """Fit ``auditor`` to the residuals of one bucket.

    Buckets with fewer than ``auditor.min_leaf`` rows get the constant mean
    residual instead. Clamping and gating are applied by :class:`Correction`.
    """
    rows = np.asarray(rows)
    if rows.size == 0:
        raise ValueError("empty bucket")
    r = residuals[rows]
    if rows.size < auditor.min_leaf:
        return ConstantModel(float(np.mean(r)))
    return auditor.fit(X[rows], r)


def _candidates(X_fit, r_fit, k_fit, X_eval, r_eval, k_eval, m, upper, bound_h, auditor, gated):
    """Yield ``(bucket, model, h_eval, delta)`` for every nonempty bucket."""
    for k in range(m):
        rows = np.flatnonzero(k_fit == k)
        if rows.size == 0:
            continue
        model = audit_bucket(X_fit, r_fit, rows, auditor)
        corr = Correction(0.0, model, k if gated else None, m, upper, bound_h)
        h_eval = np.clip(model.predict(X_eval), -bound_h, bound_h)
        if gated:
            h_eval = h_eval * (k_eval == k)
        yield k, corr, h_eval, float(np.mean(h_eval * r_eval))


def _audit_round(X_fit, pred_fit, theta_fit, X_eval, pred_eval, theta_eval, cfg, upper, bound_h):
    m = 1 if cfg.global_auditors else cfg.n_buckets
    gated = not cfg.global_auditors
    r_fit = pred_fit - theta_fit
    r_eval = pred_eval - theta_eval
    k_fit = bucket_index(pred_fit, m, upper)
    k_eval = bucket_index(pred_eval, m, upper)
    best = None
    for cand in _candidates(X_fit, r_fit, k_fit, X_eval, r_eval, k_eval, m, upper, bound_h,
                            cfg.auditor, gated):
        if best is None or abs(cand[3]) > abs(best[3]):
            best = cand
    return best, r_fit


def calibrate(base, X, theta, calib, valid, config=None, upper=1.0):
    """Boost ``base`` until it is multicalibrated on the validation rows.

    Parameters
    ----------
    base : object with ``predict(X)``
        Initial predictor.
    X : (N, d) array
        Covariates of every source row.
    theta : (N,) array
        Pseudo-observations for the same rows.
    calib, valid : index arrays
        Disjoint calibration (auditor fitting) and validation (auditing) rows.
    config : CalibrationConfig
    upper : float
        Upper end of the prediction range (1 for SP, the horizon for RM).

    Returns
    -------
    (AdditivePredictor, AuditTrace)
    """
    cfg = config or CalibrationConfig()
    alpha, bound_h = cfg.resolved(upper)
    calib = np.asarray(calib)
    valid = np.asarray(valid)
    if valid.size == 0:
        raise ValueError("validation set required")
    if calib.size == 0:
        raise ValueError("calibration set required")
    if np.intersect1d(calib, valid).size:
        raise ValueError("calibration and validation rows overlap")
    X = np.asarray(X, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    Xc, Xv = X[calib], X[valid]
    tc, tv = theta[calib], theta[valid]
    pc = np.asarray(base.predict(Xc), dtype=np.float64)
    pv = np.asarray(base.predict(Xv), dtype=np.float64)

    predictor = AdditivePredictor(base, [], float(upper), cfg.clip)
    trace = AuditTrace()
    for b in range(cfg.max_iters):
        best, r_cal = _audit_round(Xc, pc, tc, Xv, pv, tv, cfg, upper, bound_h)
        k, corr, h_val, delta = best
        trace.records.append(AuditRecord(b, k, delta, abs(delta), float(np.mean(r_cal ** 2))))
        if abs(delta) <= alpha:
            trace.halt = Halt.CONVERGED
            break
        corr = Correction(cfg.eta, corr.auditor, corr.bucket, corr.n_buckets, upper, bound_h)
        h_cal = corr.h(Xc, pc)
        predictor.corrections.append(corr)
        pc = pc - cfg.eta * h_cal
        pv = pv - cfg.eta * h_val
    else:
        trace.halt = Halt.MAX_ITERS
    trace.final_mse = float(np.mean((pc - tc) ** 2))
    return predictor, trace


def audit_statistic(predictor, X_eval, theta_eval, config=None, upper=1.0, X_fit=None, theta_fit=None):
    """Largest bucket-wise residual correlation ``max_k |Delta_k|`` on the eval rows.

    Auditors are fit fresh on ``(X_fit, theta_fit)``, defaulting to the eval rows.
    """
    cfg = config or CalibrationConfig()
    _, bound_h = cfg.resolved(upper)
    X_eval = np.asarray(X_eval, dtype=np.float64)
    theta_eval = np.asarray(theta_eval, dtype=np.float64)
    if X_eval.shape[0] == 0:
        raise ValueError("evaluation set is empty")
    if X_fit is None:
        X_fit, theta_fit = X_eval, theta_eval
    X_fit = np.asarray(X_fit, dtype=np.float64)
    pf = predictor.predict(X_fit, clip=False) if isinstance(predictor, AdditivePredictor) \
        else predictor.predict(X_fit)
    pe = predictor.predict(X_eval, clip=False) if isinstance(predictor, AdditivePredictor) \
        else predictor.predict(X_eval)
    best, _ = _audit_round(X_fit, pf, np.asarray(theta_fit, dtype=np.float64),
                           X_eval, pe, theta_eval, cfg, upper, bound_h)
    return abs(best[3])
