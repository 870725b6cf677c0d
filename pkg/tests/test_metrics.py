import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionpred.config import TrackerConfig
from motionpred.detector import NoiseSpec
from motionpred.metrics import (AlignmentError, MetricSet, PredictionLog, UndefinedMetricError,
                                aggregate, compare_baseline, log_from_results, metric_set,
                                position_error, position_rmse, reduction_ratio, render_table,
                                velocity_errors, zero_velocity_results)
from motionpred.pipeline import run_sequence
from motionpred.synth import CorrespondenceSpec, ObjectSpec, ScenarioSpec, generate


def log(pp, pv, gp, gv, fail=None):
    n = len(pp)
    return PredictionLog(np.array(pp, float), np.array(pv, float), np.array(gp, float),
                         np.array(gv, float), np.zeros(n, bool) if fail is None else fail)


def test_perfect_prediction_is_zero():
    pts = [[1, 2], [3, 4], [5, 6]]
    v = [[1, 0], [0, 1], [1, 1]]
    lg = log(pts, v, pts, v)
    assert position_error(lg) == 0.0 and position_rmse(lg) == 0.0
    assert velocity_errors(lg) == (0.0, pytest.approx(1.0), 0.0)


def test_three_four_five():
    lg = log([[3, 4]], [[0, 0]], [[0, 0]], [[0, 0]])
    assert position_error(lg) == 5.0
    assert position_rmse(lg) == 5.0


def test_rmse_dominates_mean():
    lg = log([[1, 0], [3, 0]], [[0, 0]] * 2, [[0, 0]] * 2, [[0, 0]] * 2)
    assert position_error(lg) == 2.0
    assert position_rmse(lg) == pytest.approx(math.sqrt(5.0))


def test_zero_velocity_prediction():
    gv = [[3, 4], [6, 8]]
    mse, cos, mag = velocity_errors(log([[0, 0]] * 2, [[0, 0]] * 2, [[0, 0]] * 2, gv))
    assert cos is None
    assert mse == mag == 7.5


def test_orthogonal_unit_velocity():
    assert velocity_errors(log([[0, 0]], [[1, 0]], [[0, 0]], [[0, 1]])) == (
        pytest.approx(math.sqrt(2)), pytest.approx(0.0), 0.0)


def test_failures_excluded():
    lg = log([[0, 0], [np.nan, np.nan]], [[0, 0], [np.nan, np.nan]], [[1, 0], [9, 9]],
             [[0, 0], [1, 1]], np.array([False, True]))
    assert position_error(lg) == 1.0


def test_all_failures_undefined():
    lg = log([[0, 0]], [[0, 0]], [[0, 0]], [[0, 0]], np.array([True]))
    with pytest.raises(UndefinedMetricError):
        position_error(lg)


vec = st.tuples(st.floats(-50, 50), st.floats(-50, 50))


@settings(max_examples=100)
@given(st.lists(st.tuples(vec, vec, vec, vec), min_size=1, max_size=10), vec)
def test_translation_invariance_and_cosine_bounds(rows, shift):
    pp, pv, gp, gv = (np.array([r[i] for r in rows]) for i in range(4))
    a = log(pp, pv, gp, gv)
    b = log(pp + shift, pv, gp + shift, gv)
    assert position_error(a) == pytest.approx(position_error(b), abs=1e-9)
    _, cos, _ = velocity_errors(a)
    assert cos is None or -1.0 <= cos <= 1.0


def cv_scenario(v=(4.0, 0.0), length=80, **kw):
    return generate(ScenarioSpec(length=length, object=ObjectSpec(kind="constant_velocity", velocity=v),
                                 correspondence=CorrespondenceSpec(count=30),
                                 detection=NoiseSpec(sigma_pos=0, sigma_size=0), **kw))


def test_baseline_error_equals_speed():
    sc = cv_scenario()
    cfg = TrackerConfig().with_ablation(False, False, False)
    m = metric_set(run_sequence(sc.frames, sc.init_detection(), cfg, sc.provider()), sc.ground_truth)
    assert m.pos_err == pytest.approx(4.0)
    assert m.cosine is None and m.vel_mse == pytest.approx(4.0) and m.mag == pytest.approx(4.0)


def test_pipeline_converges_on_constant_velocity():
    sc = cv_scenario()
    out = compare_baseline(sc.frames, sc.ground_truth, TrackerConfig(), sc.provider(),
                           sc.init_detection())
    assert out["baseline"]["pos_err"] == pytest.approx(4.0)
    tail = out["results"]["ours"][40:]
    errs = [np.hypot(r.predicted_box_camera.x - g.box.x, r.predicted_box_camera.y - g.box.y)
            for r, g in zip(tail, sc.ground_truth[40:])]
    assert max(errs) < 0.5
    assert out["pos_ratio"] < 0.5


def test_static_scene_ratio_is_one():
    sc = cv_scenario(v=(0.0, 0.0), length=30)
    out = compare_baseline(sc.frames, sc.ground_truth, TrackerConfig(), sc.provider(),
                           sc.init_detection())
    assert out["pos_ratio"] == 1.0
    assert reduction_ratio(0.0, 0.0) == 1.0


def test_zero_velocity_rescoring_matches_baseline_run():
    sc = cv_scenario(length=30)
    base = run_sequence(sc.frames, sc.init_detection(), TrackerConfig().with_ablation(False, False, False),
                        sc.provider())
    assert metric_set(zero_velocity_results(base), sc.ground_truth) == metric_set(base, sc.ground_truth)


def test_alignment_errors():
    sc = cv_scenario(length=10)
    res = run_sequence(sc.frames, sc.init_detection(), TrackerConfig(), sc.provider())
    with pytest.raises(AlignmentError):
        log_from_results(res, sc.ground_truth[:-1])
    with pytest.raises(AlignmentError):
        log_from_results(res[:-1], sc.ground_truth)


def test_aggregate_and_table():
    a = MetricSet(1.0, 2.0, 3.0, None, 4.0, 10, 0)
    b = MetricSet(3.0, 4.0, 5.0, 0.5, 6.0, 30, 1)
    agg = aggregate([a, b])
    assert agg["pos_err"] == 2.0 and agg["cosine"] == 0.5 and agg["failures"] == 1
    assert aggregate([a, b], weighted=True)["pos_err"] == pytest.approx(2.5)
    table = render_table([("Baseline", a.as_dict()), ("Full", agg)])
    base_line = table.splitlines()[2].split()
    assert base_line[-2] == "-"
    assert "Pos Err." in table and "Cosine" in table
    with pytest.raises(UndefinedMetricError):
        aggregate([])
