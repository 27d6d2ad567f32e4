"""Target-domain evaluation: benchmarks, bias and the concordance index."""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from survcal._backend import kernels

REPORT_COLUMNS = ["method", "subgroup", "horizon", "estimate", "benchmark",
                  "abs_bias", "rel_bias", "se", "reps"]
UNDEFINED = "NA"


def target_benchmark(theta_target, mask=None):
    """Mean of the target-domain pseudo-observations over a subgroup."""
    theta_target = np.asarray(theta_target, dtype=np.float64)
    if mask is not None:
        theta_target = theta_target[np.asarray(mask, dtype=bool)]
    if theta_target.size == 0:
        raise ValueError("empty subgroup in target domain")
    return float(np.mean(theta_target))


def bias(estimate, benchmark):
    """``(|estimate - benchmark|, that / |benchmark|)``; relative is None near zero."""
    err = abs(float(estimate) - float(benchmark))
    rel = err / abs(benchmark) if abs(benchmark) > 1e-9 else None
    return err, rel


def c_index(pred, times, events, tie_credit=False):
    """Fraction of comparable pairs ranked correctly by predicted survival.

    A pair ``(i, j)`` is comparable when ``i`` had an event and
    ``T~_j > T~_i``; it is concordant when ``pred_j > pred_i``. Ties in the
    prediction score 0 unless ``tie_credit`` grants them 1/2.
    """
    pred = np.asarray(pred, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if not (pred.shape == times.shape == events.shape):
        raise ValueError("pred, times and events lengths differ")
    num, den = kernels.concordance_counts(pred, times, events, bool(tie_credit))
    if den == 0:
        raise ValueError("no comparable pairs")
    return num / den


@dataclass(frozen=True)
class EvalRow:
    method: str
    subgroup: str
    horizon: float
    estimate: float
    benchmark: float
    abs_bias: float
    rel_bias: float | None
    se: float
    reps: int


def _mean_se(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(np.mean(v)), se


def aggregate(method, subgroup, horizon, estimates, benchmarks):
    """Fold per-replication estimates into one :class:`EvalRow`.

    ``abs_bias`` is the replication mean of ``|estimate - benchmark|``, ``se``
    its standard error, ``rel_bias`` the mean of the per-replication relative
    bias (None if any benchmark is numerically zero).
    """
    est = np.asarray(estimates, dtype=np.float64)
    ben = np.asarray(benchmarks, dtype=np.float64)
    errs = np.abs(est - ben)
    abs_bias, se = _mean_se(errs)
    rel = None
    if ben.size and np.all(np.abs(ben) > 1e-9):
        rel = float(np.mean(errs / np.abs(ben)))
    return EvalRow(method, subgroup, float(horizon), float(np.mean(est)), float(np.mean(ben)),
                   abs_bias, rel, se, int(est.size))


def _num(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return UNDEFINED
    return repr(float(x))


def report_to_csv(rows, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([r.method, r.subgroup, _num(r.horizon), _num(r.estimate), _num(r.benchmark),
                    _num(r.abs_bias), _num(r.rel_bias), _num(r.se), r.reps])
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return None
