import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scalelaw.curve_data import CurveDictionary, PerformancePoint, make_curve
from scalelaw.metamodel import (ForestConfig, MetaModel, MetaModelError, ShapeError, Tree, brute_force_switch,
                                extract_features, ground_truth_switch, linear_switch, loo_train_predict,
                                model_from_json, model_to_json, predict_switch, rf_predict, rf_train,
                                save_model, load_model, switch_errors, train_meta)
from scalelaw.predictors import alpha_vec, ppl_eval
from scalelaw.synth import SynthSpec, gen_curve, gen_dictionary

E = math.e


# ---------------------------------------------------------------- oracles

def lstsq_e_perf(fit_pts, eval_pts, N):
    n = np.array([p.n for p in fit_pts], float)
    y = np.log1p(-np.array([p.v for p in fit_pts]))
    th, *_ = np.linalg.lstsq(alpha_vec(N, n), y, rcond=None)
    ne = np.array([p.n for p in eval_pts], float)
    ve = np.array([p.v for p in eval_pts])
    return 100 * np.mean(np.abs(ve + np.expm1(alpha_vec(N, ne) @ th)))


def loop_argmin(candidates, errs, tol=1e-9):
    best = min(errs)
    for N, e in zip(candidates, errs):
        if e <= best + tol:
            return N


def oracle_ground_truth(curve):
    cands = [p.n for p in curve.points]
    errs = [lstsq_e_perf(curve.fit_points, curve.eval_points, N) for N in cands]
    return loop_argmin(cands, errs)


def oracle_brute(points):
    pts = sorted(points)
    cands = [p.n for p in pts]
    return loop_argmin(cands, [lstsq_e_perf(pts[:-1], pts[-1:], N) for N in cands])


# ---------------------------------------------------------------- features

def test_features_unit_logs():
    class P(SimpleNamespace):
        pass
    x = extract_features([P(n=E, v=1 / E)], classes=E)
    np.testing.assert_allclose(x, [1.0, -1.0, 1.0], atol=1e-15)


def test_features_length_and_order():
    pts = [PerformancePoint(10 * k, 0.1 * k) for k in range(1, 6)]
    x = extract_features(pts, 10)
    assert x.shape == (11,)
    scaled = extract_features([PerformancePoint(p.n, p.v * 0.5) for p in pts], 10)
    np.testing.assert_array_equal(x[:5], scaled[:5])
    np.testing.assert_array_equal(x[10:], scaled[10:])
    np.testing.assert_allclose(scaled[5:10] - x[5:10], math.log(0.5), atol=1e-15)


def test_features_reject_non_positive_score():
    with pytest.raises(MetaModelError):
        extract_features([SimpleNamespace(n=3, v=0.0)], 2)
    with pytest.raises(MetaModelError):
        extract_features([PerformancePoint(3, 0.2)], 0)


# ---------------------------------------------------------------- switch searches

def test_ground_truth_recovers_grid_switch():
    grid = (10, 20, 30, 40, 50, 80, 120, 200, 400, 800, 1600)
    for N in (80, 120, 200):
        spec = SynthSpec(theta=(0.3, -0.05, -0.05), N=float(N), grid=grid, classes=10, noise_sd=0.0, fit_count=5)
        assert ground_truth_switch(gen_curve(spec)) == N


def test_ground_truth_loglinear_ties_to_first():
    pts = [(n, float(-np.expm1(-0.1 - 0.3 * math.log(n)))) for n in (5, 10, 15, 20, 25, 50, 100, 200)]
    c = make_curve("ll", 5, pts, fit_count=5)
    assert ground_truth_switch(c) == 5
    cands, errs = switch_errors(c)
    assert max(errs) - min(errs) < 1e-9


def test_ground_truth_matches_oracle_on_dictionary():
    for c in gen_dictionary(12, seed=11):
        assert ground_truth_switch(c) == oracle_ground_truth(c)


def test_ground_truth_needs_eval_points():
    c = make_curve("x", 2, [(2, 0.1), (4, 0.2), (6, 0.3)])
    with pytest.raises(MetaModelError):
        ground_truth_switch(c)


def test_brute_force_loglinear_first():
    pts = [PerformancePoint(n, float(-np.expm1(-0.2 - 0.25 * math.log(n)))) for n in (8, 16, 24, 32, 40)]
    assert brute_force_switch(pts) == 8


@given(st.integers(0, 2**31 - 1))
def test_brute_force_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n = np.array([10, 20, 30, 40, 50.0])
    y = ppl_eval((0.2, -0.05, -0.06), 30.0, n) + rng.normal(0, 0.01, n.size)
    pts = [PerformancePoint(int(a), float(-np.expm1(b))) for a, b in zip(n, y)]
    assert brute_force_switch(pts) == oracle_brute(pts)


@pytest.mark.parametrize("m", [2, 3])
def test_brute_force_too_few_points(m):
    with pytest.raises(MetaModelError):
        brute_force_switch([PerformancePoint(k, 0.1 * k) for k in range(1, m + 1)])


def test_linear_switch():
    assert linear_switch([PerformancePoint(10, 0.2), PerformancePoint(20, 0.3)]) == 10
    assert linear_switch([PerformancePoint(7, 0.2)]) == 7
    assert linear_switch([PerformancePoint(30, 0.4), PerformancePoint(5, 0.1), PerformancePoint(9, 0.2)]) == 5
    with pytest.raises(MetaModelError):
        linear_switch([])


# ---------------------------------------------------------------- forest

def _toy(rng, n=60, d=5):
    X = rng.normal(size=(n, d))
    y = 2 * X[:, 0] - X[:, 2] ** 2 + 0.1 * rng.normal(size=n)
    return X, y


def test_constant_targets(rng):
    X, _ = _toy(rng)
    model = rf_train(X, np.full(X.shape[0], 1.75), ForestConfig(seed=0, n_trees=10))
    for x in X[:5]:
        assert model.predict_target(x) == 1.75


def test_stump_on_duplicates():
    X = np.tile([[0.3, -1.0, 2.0]], (10, 1))
    y = np.arange(10, dtype=float)
    model = rf_train(X, y, ForestConfig(seed=0, n_trees=1, max_depth=0, bootstrap=False))
    assert model.predict_target(X[0]) == pytest.approx(4.5, abs=1e-15)


def test_determinism_and_threads(rng):
    X, y = _toy(rng)
    a = rf_train(X, y, ForestConfig(seed=9, n_trees=20))
    b = rf_train(X, y, ForestConfig(seed=9, n_trees=20))
    c = rf_train(X, y, ForestConfig(seed=9, n_trees=20, n_jobs=4))
    q = rng.normal(size=(20, X.shape[1]))
    pa = [a.predict_target(x) for x in q]
    assert pa == [b.predict_target(x) for x in q] == [c.predict_target(x) for x in q]
    for ta, tc in zip(a.trees, c.trees):
        np.testing.assert_array_equal(ta.feature, tc.feature)
        np.testing.assert_array_equal(ta.threshold, tc.threshold)
    assert model_to_json(a) != model_to_json(rf_train(X, y, ForestConfig(seed=10, n_trees=20)))


def test_memorizing_tree(rng):
    X, y = _toy(rng)
    model = rf_train(X, y, ForestConfig(seed=0, n_trees=1, bootstrap=False, min_leaf=1, feature_fraction=1.0))
    for x, t in zip(X, y):
        assert model.predict_target(x) == t


def test_prediction_within_leaf_range(rng):
    X, y = _toy(rng)
    model = rf_train(X, y, ForestConfig(seed=1, n_trees=15))
    lo = min(t.leaf_values.min() for t in model.trees)
    hi = max(t.leaf_values.max() for t in model.trees)
    for x in rng.normal(size=(30, X.shape[1])) * 3:
        assert lo <= model.predict_target(x) <= hi


def test_single_stump_forest_transform():
    tree = Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([math.log(4.0)]))
    model = MetaModel(trees=(tree,), config=ForestConfig(seed=0), feature_count=3)
    x = np.array([math.log(10.0), math.log(0.2), math.log(5.0)])
    assert rf_predict(model, x) == pytest.approx(20.0, rel=1e-14)
    # clamped to [n_1, n_cap]
    assert rf_predict(model, x, n_cap=15.0) == 15.0
    tree_small = Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([-10.0]))
    small = MetaModel(trees=(tree_small,), config=ForestConfig(seed=0), feature_count=3)
    assert rf_predict(small, x) == pytest.approx(10.0)


def test_shape_checks(rng):
    X, y = _toy(rng)
    model = rf_train(X, y, ForestConfig(seed=0, n_trees=2))
    with pytest.raises(ShapeError):
        model.predict_target(np.zeros(X.shape[1] + 1))
    with pytest.raises(ShapeError):
        rf_train(X, y[:-1], ForestConfig(seed=0))
    with pytest.raises(MetaModelError):
        rf_train(X[:1], y[:1], ForestConfig(seed=0))


@pytest.mark.parametrize("kw", [dict(n_trees=0), dict(min_leaf=0), dict(feature_fraction=0.0),
                                dict(feature_fraction=1.5)])
def test_forest_config_validation(kw):
    with pytest.raises(MetaModelError):
        ForestConfig(seed=0, **kw)


@given(st.integers(0, 2**31 - 1))
def test_row_order_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(25, 3)).astype(float)
    y = rng.normal(size=25).round(2)
    cfg = ForestConfig(seed=0, n_trees=1, bootstrap=False, feature_fraction=1.0)
    perm = rng.permutation(25)
    a, b = rf_train(X, y, cfg), rf_train(X[perm], y[perm], cfg)
    q = rng.integers(-1, 5, size=(20, 3)).astype(float)
    assert [a.predict_target(x) for x in q] == [b.predict_target(x) for x in q]


def test_internal_nodes_reference_valid_features(rng):
    X, y = _toy(rng, d=11)
    model = rf_train(X, y, ForestConfig(seed=3, n_trees=5))
    for t in model.trees:
        assert t.feature.max() < 11
        assert np.all(np.isfinite(t.leaf_values))


# ---------------------------------------------------------------- dictionary level

def test_loo_minimal_dictionary():
    d = gen_dictionary(2, seed=4)
    res = loo_train_predict(d, ForestConfig(seed=0, n_trees=5))
    assert set(res) == {c.name for c in d}
    for c in d:
        other = [o for o in d if o.name != c.name][0]
        # a forest trained on one curve predicts that curve's normalized switch
        target = ground_truth_switch(other) / other.classes
        n_hat = res[c.name][0]
        n1, cap = c.points[0].n, 1e4 * c.fit_points[-1].n
        assert n_hat == pytest.approx(min(max(target * c.classes, n1), cap), rel=1e-12)
        assert res[c.name][1] == ground_truth_switch(c)


def test_loo_needs_two_curves():
    d = gen_dictionary(2, seed=4)
    with pytest.raises(MetaModelError):
        loo_train_predict(CurveDictionary(d.entries[:1]), ForestConfig(seed=0))


def test_persistence_round_trip(tmp_path):
    d = gen_dictionary(8, seed=2)
    model = train_meta(d, ForestConfig(seed=5, n_trees=10))
    save_model(model, tmp_path / "m.json")
    again = load_model(tmp_path / "m.json")
    assert model_to_json(again) == model_to_json(model)
    for c in gen_dictionary(5, seed=3):
        assert predict_switch(again, c) == predict_switch(model, c)


def test_unknown_version_rejected():
    d = gen_dictionary(3, seed=2)
    text = model_to_json(train_meta(d, ForestConfig(seed=5, n_trees=2)))
    with pytest.raises(MetaModelError, match="version"):
        model_from_json(text.replace('"version":1', '"version":99'))
    with pytest.raises(MetaModelError):
        model_from_json('{"format": "other"}')


def test_mixed_fit_counts_rejected():
    d = gen_dictionary(3, seed=2)
    mixed = CurveDictionary((d.entries[0].with_split(4),) + d.entries[1:])
    with pytest.raises(ShapeError):
        train_meta(mixed, ForestConfig(seed=0))
