from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scalelaw.curve_data import PerformancePoint
from scalelaw.metrics import (INF_LABEL, AlignmentError, data_estimation_error, evaluate, format_e_data,
                              mean_prediction_error, rmse)


def _exact_mean_abs(t, p):
    fr = [abs(Fraction(a) - Fraction(b)) for a, b in zip(t, p)]
    return float(sum(fr) / len(fr) * 100)


def test_e_perf_hand_example():
    assert mean_prediction_error([0.82, 0.88], [0.80, 0.90]) == pytest.approx(2.0, rel=1e-12)
    assert mean_prediction_error([0.82, 0.88], [0.80, 0.90]) == pytest.approx(
        _exact_mean_abs([0.82, 0.88], [0.80, 0.90]), rel=1e-15)


def test_e_perf_exact_dyadic():
    assert mean_prediction_error([0.75, 0.5], [0.5, 0.25]) == 25.0
    assert mean_prediction_error([0.5], [0.375]) == 12.5


def test_e_perf_single_pair():
    assert mean_prediction_error([0.5], [0.4]) == pytest.approx(10.0, rel=1e-15)


def test_perfect_predictor():
    assert mean_prediction_error([0.1, 0.7], [0.1, 0.7]) == 0.0
    assert rmse([0.1, 0.7], [0.1, 0.7]) == 0.0


def test_rmse_examples():
    assert rmse([0.8, 0.9], [0.9, 0.8]) == pytest.approx(10.0, rel=1e-12)
    assert rmse([0.75, 0.25], [0.25, 0.75]) == 50.0


def test_alignment_errors():
    with pytest.raises(AlignmentError):
        mean_prediction_error([0.1, 0.2], [0.1])
    with pytest.raises(AlignmentError):
        mean_prediction_error([], [])
    truth = [PerformancePoint(10, 0.5), PerformancePoint(20, 0.6)]
    with pytest.raises(AlignmentError):
        rmse(truth, [(10, 0.5), (30, 0.6)])
    assert rmse(truth, [(10, 0.5), (20, 0.6)]) == 0.0


def test_e_data_examples():
    assert data_estimation_error(120, 100) == 0.2
    assert data_estimation_error(100, 100) == 0.0
    assert data_estimation_error(1200, 100) == 11.0
    assert data_estimation_error(50, 100) == -0.5


def test_e_data_domain():
    with pytest.raises(ValueError):
        data_estimation_error(10, 0)


def test_inf_sentinel():
    assert format_e_data(1000.5) == INF_LABEL == "inf"
    assert format_e_data(1000.0) == "1000.00"
    assert format_e_data(data_estimation_error(100_200, 100)) == "inf"
    assert format_e_data(data_estimation_error(100_100, 100)) == "1000.00"
    assert format_e_data(-0.25) == "-0.25"


scores = st.floats(0.001, 0.999)


@given(st.lists(st.tuples(scores, scores), min_size=1, max_size=20), st.randoms(use_true_random=False))
def test_metric_properties(pairs, rnd):
    t = [a for a, _ in pairs]
    p = [b for _, b in pairs]
    e, r = mean_prediction_error(t, p), rmse(t, p)
    assert e >= 0 and r >= 0
    assert r >= e - 1e-12
    order = list(range(len(t)))
    rnd.shuffle(order)
    assert mean_prediction_error([t[i] for i in order], [p[i] for i in order]) == pytest.approx(e, rel=1e-12)
    assert rmse([t[i] for i in order], [p[i] for i in order]) == pytest.approx(r, rel=1e-12)
    assert (e == 0) == (t == p)


def test_report():
    pts = [PerformancePoint(10, 0.5), PerformancePoint(20, 0.75)]
    rep = evaluate(pts, np.array([0.25, 0.75]))
    assert rep.e_perf == 12.5
    assert rep.rmse == pytest.approx(np.sqrt(0.5 * 0.0625) * 100)
    csv = rep.to_csv().splitlines()
    assert csv[0] == "# e_perf = 12.5" and csv[2] == "n,v_true,v_pred" and csv[3] == "10,0.5,0.25"
