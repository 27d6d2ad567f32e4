import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survcal.datagen import HazardSpec, gen_covariates, gen_failure_weibull, true_survival
from survcal.metrics import aggregate, bias, c_index, report_to_csv, target_benchmark
from survcal.survival import pseudo_jackknife


def brute_c_index(pred, times, events, tie_credit=False):
    num = den = 0.0
    n = len(pred)
    for i in range(n):
        if not events[i]:
            continue
        for j in range(n):
            if times[j] > times[i]:
                den += 1
                if pred[j] > pred[i]:
                    num += 1
                elif pred[j] == pred[i] and tie_credit:
                    num += 0.5
    return num / den


def test_perfect_concordance():
    t = np.arange(1.0, 21.0)
    assert c_index(t / 100, t, np.ones(20, bool)) == 1.0


def test_constant_predictions():
    t = np.arange(1.0, 11.0)
    e = np.ones(10, bool)
    assert c_index(np.full(10, 0.5), t, e) == 0.0
    assert c_index(np.full(10, 0.5), t, e, tie_credit=True) == 0.5


@pytest.mark.parametrize("seed", range(5))
def test_brute_force_n50(seed):
    rng = np.random.default_rng(seed)
    p = np.round(rng.random(50), 1)
    t = np.round(rng.exponential(size=50), 1)
    e = rng.random(50) < 0.7
    for tie in (False, True):
        assert c_index(p, t, e, tie) == brute_c_index(p, t, e, tie)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(1, 8), st.booleans()),
                min_size=2, max_size=30))
def test_brute_force_property(rows):
    p, t, e = (np.array(c) for c in zip(*rows))
    p, t, e = p.astype(float), t.astype(float), e.astype(bool)
    try:
        expect = brute_c_index(p, t, e)
    except ZeroDivisionError:
        with pytest.raises(ValueError):
            c_index(p, t, e)
        return
    assert c_index(p, t, e) == expect


def test_benchmark_collapse_no_censoring():
    t = np.array([1.0, 3.0, 5.0, 7.0])
    pm = pseudo_jackknife((t, np.ones(4, bool)), "sp", [4.0])
    assert target_benchmark(pm.values[:, 0]) == pytest.approx(0.5)
    assert target_benchmark(pm.values[:, 0], [True, True, False, False]) == pytest.approx(0.0)


def test_benchmark_matches_analytic_survival():
    X = gen_covariates(100000, 21)
    T = gen_failure_weibull(X, seed=21)
    emp = target_benchmark((T >= 30).astype(float))
    assert abs(emp - true_survival(X, HazardSpec(), 30.0).mean()) < 0.005


def test_bias():
    assert bias(0.3, 0.2) == pytest.approx((0.1, 0.5))
    assert bias(0.3, 0.0)[1] is None


def test_aggregate_and_csv():
    row = aggregate("naive", "all", 5.0, [0.5, 0.7], [0.6, 0.6])
    assert row.abs_bias == pytest.approx(0.1)
    assert row.se == pytest.approx(0.0)
    assert row.reps == 2
    text = report_to_csv([row, aggregate("ipsw", "all", 5.0, [0.1], [0.0])])
    lines = text.splitlines()
    assert lines[0] == "method,subgroup,horizon,estimate,benchmark,abs_bias,rel_bias,se,reps"
    assert lines[2].split(",")[6:8] == ["NA", "NA"]
    assert not math.isnan(float(lines[1].split(",")[5]))
