import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_cp, oracle_cqr, oracle_ncp
from lerconf.conformal import (
    CalibrationError,
    CalibrationScores,
    DegeneracyCounter,
    IntervalModel,
    PredictionInterval,
    bounds_cp,
    bounds_cqr,
    bounds_ncp,
    calibrate_cp,
    calibrate_cqr,
    calibrate_ncp,
    cqr_score,
    interval_cp,
    interval_cqr,
    interval_ncp,
    normalized_score,
    quantile_index,
    residual_score,
)


def test_quantile_index_examples():
    assert quantile_index(5760, 0.1) == 576
    assert quantile_index(9, 0.2) == 2
    with pytest.raises(CalibrationError):
        quantile_index(5, 0.1)
    with pytest.raises(CalibrationError):
        quantile_index(0, 0.1)
    with pytest.raises(CalibrationError):
        quantile_index(10, 1.0)


def test_residual_score_examples():
    assert residual_score(1.0, 1.0) == 0.0
    assert residual_score(0.4, 0.55) == pytest.approx(0.15)
    assert residual_score(0.55, 0.4) == residual_score(0.4, 0.55)


def test_cp_calibration_examples():
    m = calibrate_cp(np.arange(1, 10), 0.2)
    assert (m.m, m.constant) == (2, 8.0)
    for alpha in (0.1, 0.2, 0.45):
        assert calibrate_cp(np.full(19, 0.3), alpha).constant == 0.3
    with pytest.raises(CalibrationError):
        calibrate_cp([-0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0], 0.2)


def test_cp_interval_examples():
    model = IntervalModel("cp", 0.135, 0.1, 99, 10)
    iv = interval_cp(1.0, model)
    assert (iv.lo, iv.hi) == pytest.approx((0.865, 1.135))
    zero = interval_cp(0.7, IntervalModel("cp", 0.0, 0.1, 99, 10))
    assert zero.lo == zero.hi == 0.7
    assert interval_cp(5.0, model).width == pytest.approx(interval_cp(-3.0, model).width)
    assert interval_cp(5.0, model).width == pytest.approx(0.27)


def test_ncp_examples():
    assert normalized_score(0.1, 0.5) == pytest.approx(0.2)
    with pytest.raises(CalibrationError):
        normalized_score(0.1, 0.0)
    r = np.random.default_rng(0).random(50)
    assert calibrate_ncp(r, np.ones(50), 0.1).constant == calibrate_cp(r, 0.1).constant
    model = IntervalModel("ncp", 0.4, 0.1, 99, 10)
    a = interval_ncp(2.0, 1.0, model)
    b = interval_cp(2.0, IntervalModel("cp", 0.4, 0.1, 99, 10))
    assert (a.lo, a.hi) == (b.lo, b.hi)
    assert interval_ncp(2.0, 0.6, model).width == pytest.approx(2 * interval_ncp(2.0, 0.3, model).width)
    with pytest.raises(CalibrationError):
        calibrate_ncp([0.1, 0.2], [1.0], 0.1)


def test_cqr_score_examples():
    assert cqr_score(6, 2, 5) == 1
    assert cqr_score(3, 2, 5) == -1
    assert cqr_score(2, 2, 5) == 0
    with pytest.raises(CalibrationError):
        cqr_score(1, 5, 2)


def test_cqr_calibration_examples():
    n = 20
    inside = calibrate_cqr(np.full(n, 3.5), np.zeros(n), np.full(n, 7.0), 0.1)
    assert inside.constant < 0
    edge = calibrate_cqr(np.full(n, 5.0), np.full(n, 2.0), np.full(n, 5.0), 0.1)
    assert edge.constant == 0.0


def test_cqr_interval_examples():
    iv = interval_cqr(2, 5, IntervalModel("cqr", 1.0, 0.1, 99, 10))
    assert (iv.lo, iv.hi) == (1, 6)
    iv = interval_cqr(2, 5, IntervalModel("cqr", -1.0, 0.1, 99, 10))
    assert (iv.lo, iv.hi) == (3, 4)
    counter = DegeneracyCounter()
    iv = interval_cqr(2, 5, IntervalModel("cqr", -2.0, 0.1, 99, 10), counter)
    assert (iv.lo, iv.hi) == (3.5, 3.5) and counter.count == 1
    lo, hi, ndeg = bounds_cqr([2.0, 0.0], [5.0, 10.0], IntervalModel("cqr", -2.0, 0.1, 99, 10))
    np.testing.assert_array_equal(lo, [3.5, 2.0])
    np.testing.assert_array_equal(hi, [3.5, 8.0])
    assert ndeg == 1


def test_model_and_interval_validation():
    with pytest.raises(ValueError):
        IntervalModel("xx", 0.1, 0.1, 10, 1)
    with pytest.raises(CalibrationError):
        IntervalModel("cp", -0.1, 0.1, 10, 1)
    with pytest.raises(CalibrationError):
        IntervalModel("cqr", float("nan"), 0.1, 10, 1)
    with pytest.raises(ValueError):
        PredictionInterval(2.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        interval_ncp(1.0, 1.0, IntervalModel("cp", 0.1, 0.1, 10, 1))
    assert PredictionInterval(1.0, 2.0, 1.5).contains(2.0)


def test_scores_sorted_stably():
    cs = CalibrationScores.from_unsorted([0.3, 0.9, 0.3, 0.1])
    np.testing.assert_array_equal(cs.scores, [0.9, 0.3, 0.3, 0.1])
    with pytest.raises(CalibrationError):
        CalibrationScores.from_unsorted([])
    with pytest.raises(CalibrationError):
        CalibrationScores.from_unsorted([np.inf])


scores = st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=300)
alphas = st.floats(0.01, 0.99)


@settings(max_examples=200)
@given(r=scores, alpha=alphas)
def test_cp_matches_oracle(r, alpha):
    expected = oracle_cp(r, alpha)
    if expected is None:
        with pytest.raises(CalibrationError):
            calibrate_cp(r, alpha)
    else:
        assert calibrate_cp(r, alpha).constant == expected


@settings(max_examples=200)
@given(data=st.data(), alpha=alphas)
def test_ncp_matches_oracle(data, alpha):
    r = data.draw(scores)
    g = data.draw(st.lists(st.floats(1e-3, 10), min_size=len(r), max_size=len(r)))
    expected = oracle_ncp(r, g, alpha)
    if expected is not None:
        assert calibrate_ncp(r, g, alpha).constant == expected


@settings(max_examples=200)
@given(data=st.data(), alpha=alphas)
def test_cqr_matches_oracle(data, alpha):
    n = data.draw(st.integers(1, 200))
    y = data.draw(st.lists(st.floats(-10, 10), min_size=n, max_size=n))
    a = data.draw(st.lists(st.floats(-10, 10), min_size=n, max_size=n))
    w = data.draw(st.lists(st.floats(0, 5), min_size=n, max_size=n))
    lo = np.array(a)
    hi = lo + np.array(w)
    expected = oracle_cqr(y, lo, hi, alpha)
    if expected is not None:
        assert calibrate_cqr(y, lo, hi, alpha).constant == expected


@settings(max_examples=100)
@given(r=st.lists(st.floats(0, 100), min_size=20, max_size=200), a1=st.floats(0.05, 0.95),
       a2=st.floats(0.05, 0.95))
def test_constant_nonincreasing_in_alpha(r, a1, a2):
    lo, hi = sorted((a1, a2))
    assert calibrate_cp(r, hi).constant <= calibrate_cp(r, lo).constant


def test_batch_bounds_match_scalar_intervals():
    rng = np.random.default_rng(3)
    yhat = rng.random(20)
    gamma = rng.random(20) + 0.1
    cp = IntervalModel("cp", 0.2, 0.1, 99, 10)
    ncp = IntervalModel("ncp", 0.3, 0.1, 99, 10)
    lo, hi = bounds_cp(yhat, cp)
    lo2, hi2 = bounds_ncp(yhat, gamma, ncp)
    for i in range(20):
        iv = interval_cp(yhat[i], cp)
        assert (lo[i], hi[i]) == (iv.lo, iv.hi)
        iv = interval_ncp(yhat[i], gamma[i], ncp)
        assert (lo2[i], hi2[i]) == (iv.lo, iv.hi)


def test_plain_cp_marginal_coverage():
    rng = np.random.default_rng(2024)
    n, alpha = 500, 0.1
    cover = []
    for _ in range(200):
        s = np.abs(rng.standard_normal(2 * n))
        model = calibrate_cp(s[:n], alpha)
        cover.append(np.mean(s[n:] <= model.constant))
    mean = float(np.mean(cover))
    assert 1 - alpha - 0.01 <= mean <= 1 - alpha + 1 / (n + 1) + 0.01
