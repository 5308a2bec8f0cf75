"""Switch-point selection for the piecewise power law.

The meta-model is a random forest of CART regression trees mapping
``[log n_1..log n_m, log v_1..log v_m, log C]`` to ``log(N / C)``.  Training
targets come from :func:`ground_truth_switch`, the grid switch point that
minimizes the held-out error of the fitted PPL.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .curve_data import CurveDictionary, LearningCurve, PerformancePoint
from .fitting import FitError, fit_ppl
from .metrics import mean_prediction_error
from .predictors import Family, PredictorError, family_score

log = logging.getLogger(__name__)

FORMAT_NAME = "scalelaw-metamodel"
FORMAT_VERSION = 1
TARGET_TRANSFORM = "log_switch_per_class"
# E_perf differences below this (percentage points) count as ties
TIE_TOL = 1e-9


class MetaModelError(ValueError):
    pass


class ShapeError(MetaModelError):
    pass


# ---------------------------------------------------------------- features

def extract_features(points: Sequence[PerformancePoint], classes: int) -> np.ndarray:
    if classes < 1:
        raise MetaModelError("classes must be >= 1")
    n = np.array([p.n for p in points], dtype=float)
    v = np.array([p.v for p in points], dtype=float)
    if np.any(v <= 0):
        raise MetaModelError("scores must be positive to take logs")
    return np.concatenate([np.log(n), np.log(v), [math.log(classes)]])


def curve_features(curve: LearningCurve) -> np.ndarray:
    return extract_features(curve.fit_points, curve.classes)


# ---------------------------------------------------------------- switch searches

def ppl_eval_error(fit_points, eval_points, N) -> float:
    """E_perf of a PPL fitted on ``fit_points`` at switch ``N``."""
    fit = fit_ppl(fit_points, N)
    n_eval = np.array([p.n for p in eval_points], dtype=float)
    return mean_prediction_error(eval_points, family_score(Family.PPL, fit.params, n_eval, N))


def _argmin_smallest(candidates, errors) -> float:
    errors = np.asarray(errors, dtype=float)
    best = np.nanmin(errors)
    for N, e in zip(candidates, errors):
        if e <= best + TIE_TOL:
            return float(N)
    raise AssertionError("unreachable")


def switch_errors(curve: LearningCurve):
    """``(candidates, errors)`` over the measured grid; failed fits give ``nan``."""
    fit_pts, eval_pts = curve.fit_points, curve.eval_points
    if not eval_pts:
        raise MetaModelError(f"{curve.name}: no evaluation points (fit_count == len)")
    candidates = [p.n for p in curve.points]
    errors = []
    for N in candidates:
        try:
            errors.append(ppl_eval_error(fit_pts, eval_pts, N))
        except (FitError, PredictorError) as exc:
            log.warning("%s: candidate N=%s skipped: %s", curve.name, N, exc)
            errors.append(math.nan)
    return candidates, errors


def ground_truth_switch(curve: LearningCurve) -> float:
    """Grid switch point minimizing E_perf on the evaluation points (ties: smallest)."""
    candidates, errors = switch_errors(curve)
    if all(math.isnan(e) for e in errors):
        raise MetaModelError(f"{curve.name}: every candidate fit failed")
    return _argmin_smallest(candidates, errors)


def brute_force_switch(points: Sequence[PerformancePoint]) -> float:
    """Pick ``N`` among the fit sizes by holding out the largest fit point."""
    points = sorted(points)
    if len(points) < 4:
        raise MetaModelError(f"brute-force switch search needs at least 4 points, got {len(points)}")
    head, last = points[:-1], points[-1:]
    candidates = [p.n for p in points]
    errors = []
    for N in candidates:
        try:
            errors.append(ppl_eval_error(head, last, N))
        except (FitError, PredictorError) as exc:
            log.warning("brute-force candidate N=%s skipped: %s", N, exc)
            errors.append(math.nan)
    if all(math.isnan(e) for e in errors):
        raise MetaModelError("every brute-force candidate fit failed")
    return _argmin_smallest(candidates, errors)


def linear_switch(points: Sequence[PerformancePoint]) -> float:
    if not points:
        raise MetaModelError("no points")
    return float(min(p.n for p in points))


# ---------------------------------------------------------------- random forest

@dataclass(frozen=True)
class ForestConfig:
    seed: int
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 2
    feature_fraction: float = 1.0 / 3.0
    bootstrap: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise MetaModelError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise MetaModelError("min_leaf must be >= 1")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise MetaModelError("feature_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_one(self, x) -> float:
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if x[self.feature[i]] <= self.threshold[i] else self.right[i]
        return float(self.value[i])

    @property
    def leaf_values(self):
        return self.value[self.feature < 0]


def _leaf_value(y):
    return float(np.mean(np.sort(y)))


def _best_split(X, y, features, min_leaf):
    """Variance-reduction split; ties go to the lower feature index then lower threshold."""
    n = y.size
    best = None  # (gain, feature, threshold)
    ys_all = np.sort(y)
    total_sse = float(np.sum((ys_all - ys_all.mean()) ** 2))
    if total_sse <= 0.0:
        return None
    for f in sorted(features):
        order = np.lexsort((y, X[:, f]))
        xs, ys = X[order, f], y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        # i = size of the left child
        i = np.arange(min_leaf, n - min_leaf + 1)
        if i.size == 0:
            continue
        i = i[xs[i - 1] != xs[np.minimum(i, n - 1)]]
        if i.size == 0:
            continue
        sl, ql = csum[i - 1], csq[i - 1]
        sr, qr = csum[-1] - sl, csq[-1] - ql
        sse = (ql - sl * sl / i) + (qr - sr * sr / (n - i))
        gain = total_sse - sse
        j = int(np.argmax(gain))
        if gain[j] > 1e-12 * total_sse and (best is None or gain[j] > best[0]):
            k = i[j]
            best = (float(gain[j]), f, 0.5 * (xs[k - 1] + xs[k]))
    return best


def _grow_tree(X, y, config: ForestConfig, rng: np.random.Generator) -> Tree:
    d = X.shape[1]
    k = max(1, math.ceil(config.feature_fraction * d))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        value[node] = _leaf_value(ys)
        if (config.max_depth is not None and depth >= config.max_depth) or idx.size < 2 * config.min_leaf:
            continue
        feats = range(d) if k >= d else rng.choice(d, size=k, replace=False)
        split = _best_split(X[idx], ys, feats, config.min_leaf)
        if split is None:
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        lo, hi = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = int(f), float(thr), lo, hi
        # push right first so node ids follow a depth-first, left-first order
        stack.append((hi, idx[~mask], depth + 1))
        stack.append((lo, idx[mask], depth + 1))
    return Tree(np.array(feature, dtype=int), np.array(threshold), np.array(left, dtype=int),
                np.array(right, dtype=int), np.array(value))


@dataclass(frozen=True)
class MetaModel:
    trees: tuple[Tree, ...]
    config: ForestConfig
    feature_count: int
    target_transform: str = TARGET_TRANSFORM

    @property
    def m(self) -> int:
        return (self.feature_count - 1) // 2

    def predict_target(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.feature_count,):
            raise ShapeError(f"expected {self.feature_count} features, got shape {x.shape}")
        return float(np.mean([t.predict_one(x) for t in self.trees]))


def _tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def rf_train(X, y, config: ForestConfig, target_transform: str = TARGET_TRANSFORM) -> MetaModel:
    """Train a regression forest on already-transformed targets ``y``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError(f"X has shape {X.shape} but y has {y.size} entries")
    if y.size < 2:
        raise MetaModelError("need at least 2 training samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise MetaModelError("training data must be finite")

    def build(i):
        rng = _tree_rng(config.seed, i)
        if config.bootstrap:
            rows = rng.integers(0, y.size, size=y.size)
            return _grow_tree(X[rows], y[rows], config, rng)
        return _grow_tree(X, y, config, rng)

    if config.n_jobs > 1:
        with ThreadPoolExecutor(config.n_jobs) as pool:
            trees = tuple(pool.map(build, range(config.n_trees)))
    else:
        trees = tuple(build(i) for i in range(config.n_trees))
    return MetaModel(trees=trees, config=config, feature_count=X.shape[1], target_transform=target_transform)


def switch_to_target(N, classes):
    return math.log(N / classes)


def rf_predict(model: MetaModel, x, n_cap: float | None = None) -> float:
    """Predicted switch point ``N_hat`` for one feature vector, clamped to ``[n_1, n_cap]``."""
    t = model.predict_target(x)
    x = np.asarray(x, dtype=float)
    if model.target_transform != TARGET_TRANSFORM:
        raise MetaModelError(f"unknown target transform {model.target_transform!r}")
    N = math.exp(x[-1]) * math.exp(t)
    n_1 = math.exp(x[0])
    if n_cap is None:
        n_cap = 1e4 * math.exp(x[model.m - 1])
    return float(min(max(N, n_1), n_cap))


def training_set(curves, n_stars=None):
    X = np.array([curve_features(c) for c in curves])
    if n_stars is None:
        n_stars = [ground_truth_switch(c) for c in curves]
    y = np.array([switch_to_target(N, c.classes) for N, c in zip(n_stars, curves)])
    return X, y


def train_meta(dictionary: CurveDictionary, config: ForestConfig, n_stars=None) -> MetaModel:
    curves = list(dictionary)
    if len({c.fit_count for c in curves}) != 1:
        raise ShapeError("all curves must share the same number of fit points")
    X, y = training_set(curves, n_stars)
    return rf_train(X, y, config)


def predict_switch(model: MetaModel, curve: LearningCurve, n_cap: float | None = None) -> float:
    return rf_predict(model, curve_features(curve), n_cap)


def loo_train_predict(dictionary: CurveDictionary, config: ForestConfig, n_stars=None) -> dict:
    """Leave-one-out: ``{name: (N_hat, N_star)}`` with each forest trained on the other curves."""
    curves = list(dictionary)
    if len(curves) < 2:
        raise MetaModelError("leave-one-out needs at least 2 curves")
    if len({c.fit_count for c in curves}) != 1:
        raise ShapeError("all curves must share the same number of fit points")
    if n_stars is None:
        n_stars = [ground_truth_switch(c) for c in curves]
    X, y = training_set(curves, n_stars)
    out = {}
    for i, c in enumerate(curves):
        keep = np.arange(len(curves)) != i
        if keep.sum() < 2:
            # a single training curve: the forest degenerates to its target
            model = MetaModel(trees=(Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                                          np.array([y[keep][0]])),),
                              config=config, feature_count=X.shape[1])
        else:
            model = rf_train(X[keep], y[keep], config)
        out[c.name] = (rf_predict(model, X[i]), float(n_stars[i]))
    return out


# ---------------------------------------------------------------- persistence

def model_to_json(model: MetaModel) -> str:
    trees = []
    for t in model.trees:
        trees.append([
            {"id": i, "feature": int(t.feature[i]), "threshold": float(t.threshold[i]),
             "left": int(t.left[i]), "right": int(t.right[i]), "value": float(t.value[i])}
            for i in range(t.feature.size)
        ])
    doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "m": model.m, "feature_count": model.feature_count,
           "target_transform": model.target_transform, "config": asdict(model.config), "trees": trees}
    return json.dumps(doc, indent=None, separators=(",", ":")) + "\n"


def model_from_json(text: str) -> MetaModel:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME:
        raise MetaModelError("not a meta-model file")
    if doc.get("version") != FORMAT_VERSION:
        raise MetaModelError(f"unsupported meta-model version {doc.get('version')!r}")
    trees = []
    for nodes in doc["trees"]:
        nodes = sorted(nodes, key=lambda r: r["id"])
        trees.append(Tree(np.array([r["feature"] for r in nodes], dtype=int),
                          np.array([r["threshold"] for r in nodes], dtype=float),
                          np.array([r["left"] for r in nodes], dtype=int),
                          np.array([r["right"] for r in nodes], dtype=int),
                          np.array([r["value"] for r in nodes], dtype=float)))
    return MetaModel(trees=tuple(trees), config=ForestConfig(**doc["config"]), feature_count=doc["feature_count"],
                     target_transform=doc["target_transform"])


def save_model(model: MetaModel, path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model(path) -> MetaModel:
    return model_from_json(Path(path).read_text(encoding="utf-8"))
