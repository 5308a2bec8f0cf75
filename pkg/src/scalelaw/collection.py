"""Simulated multi-step data collection against a ground-truth oracle.

At step ``k`` a predictor is fitted on the initial points plus everything
collected so far, and the next total dataset size is proposed by inverting
it at the target score.  With a confidence threshold ``tau`` the request is
additionally capped where three predictive standard deviations reach
``tau``.  The run stops as soon as an uncapped request is made (the predictor
claims the target is met there), when a measurement reaches the target, or
after ``T`` steps.
"""
from __future__ import annotations

import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from .curve_data import LearningCurve, PerformancePoint
from .fitting import FitError, FitResult, LMOptions, fit_family
from .metamodel import MetaModel, brute_force_switch, extract_features, linear_switch, rf_predict
from .metrics import data_estimation_error, format_e_data
from .predictors import Family, NonMonotoneError, PredictorError, family_inverse
from .uncertainty import invert_mean, invert_sd, predictive_variance, score_sd

log = logging.getLogger(__name__)

GROWTH_FLOOR = 1.05
DEFAULT_CAP_FACTOR = 1e4


class CollectionError(ValueError):
    pass


class OracleError(CollectionError):
    pass


class Oracle:
    """Ground-truth score as a function of the total sample count.

    ``noise_sd`` adds Gaussian noise in log-error space to measurements
    (not to :meth:`true_score`).
    """

    def __init__(self, true_score: Callable, max_n: int, noise_sd: float = 0.0, probe: int = 256):
        self._score = true_score
        self.max_n = int(max_n)
        self.noise_sd = float(noise_sd)
        grid = np.unique(np.round(np.geomspace(1, self.max_n, probe)))
        vals = np.asarray(true_score(grid), dtype=float)
        if np.any(np.diff(vals) < -1e-12):
            i = int(np.flatnonzero(np.diff(vals) < -1e-12)[0])
            raise OracleError(f"oracle score decreases between n={grid[i]:g} and n={grid[i + 1]:g}")

    def true_score(self, n):
        return self._score(np.asarray(n, dtype=float))

    def measure(self, n, rng: np.random.Generator | None = None) -> float:
        v = float(self.true_score(n))
        if self.noise_sd > 0 and rng is not None:
            v = float(-np.expm1(math.log1p(-v) + rng.normal(0.0, self.noise_sd)))
        return min(max(v, 1e-12), 1.0 - 1e-12)

    def n_star(self, v_target: float) -> float:
        return required_samples(self, v_target)


def oracle_from_table(curve: LearningCurve | Sequence[PerformancePoint], noise_sd: float = 0.0) -> Oracle:
    """Interpolate log error linearly in log n between measured points; constant outside."""
    points = curve.points if isinstance(curve, LearningCurve) else tuple(curve)
    if len(points) < 2:
        raise OracleError("an interpolated oracle needs at least 2 points")
    ln_n = np.log([p.n for p in points])
    v = np.array([p.v for p in points])
    if np.any(np.diff(v) < 0):
        warnings.warn("oracle table is not monotone; applying isotonic regression", RuntimeWarning, stacklevel=2)
        v = isotonic_regression(v, increasing=True).x
    y = np.log1p(-v)

    def score(n):
        return -np.expm1(np.interp(np.log(n), ln_n, y))

    return Oracle(score, max_n=points[-1].n, noise_sd=noise_sd)


def oracle_from_function(true_log_error: Callable, max_n: int, noise_sd: float = 0.0, min_n: float = 1.0) -> Oracle:
    """Oracle from an analytic log-error curve, held constant below ``min_n``."""
    return Oracle(lambda n: -np.expm1(true_log_error(np.maximum(n, min_n))), max_n=max_n, noise_sd=noise_sd)


def required_samples(oracle: Oracle, v_target: float) -> float:
    """Smallest integer ``n`` whose true score reaches ``v_target``; ``inf`` beyond ``max_n``."""
    if not 0.0 < v_target < 1.0:
        raise CollectionError(f"target score must lie in (0, 1), got {v_target}")
    if float(oracle.true_score(1)) >= v_target:
        return 1
    if float(oracle.true_score(oracle.max_n)) < v_target:
        return math.inf
    lo, hi = 1, oracle.max_n  # score(lo) < target <= score(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if float(oracle.true_score(mid)) >= v_target:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class CollectionPolicy:
    family: Family = Family.PPL
    # float N, or one of "linear", "brute", "meta"
    switch: object = "linear"
    T: int = 1
    tau: float | None = None
    n_cap: float | None = None
    meta_model: MetaModel | None = field(default=None, compare=False)
    classes: int | None = None
    options: LMOptions = LMOptions()

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.T < 1:
            raise CollectionError("T must be >= 1")
        if self.tau is not None and not 0.0 < self.tau < 1.0:
            raise CollectionError("tau must lie in (0, 1)")
        if self.switch == "meta" and (self.meta_model is None or self.classes is None):
            raise CollectionError("meta switch source needs a meta_model and classes")


@dataclass(frozen=True)
class Step:
    k: int
    n_request: int
    v_measured: float | None
    capped: str  # "", "sigma", "growth-floor", "n-cap"
    mean_inverse: float
    sd_inverse: float | None
    sd_at_request: float
    fit_params: tuple[float, ...]
    N: float | None


@dataclass(frozen=True)
class CollectionTrace:
    steps: tuple[Step, ...]
    K: int
    n_final: int
    n_star: float
    e_data: float
    stop_reason: str  # "predicted", "measured", "max-steps"
    v_target: float
    tau: float | None = None

    @property
    def reachable(self) -> bool:
        return math.isfinite(self.n_star)

    @property
    def e_data_label(self) -> str:
        return format_e_data(self.e_data)

    def to_csv(self, comments: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        n_star = "unreachable" if not self.reachable else str(int(self.n_star))
        buf.write(f"# K = {self.K}\n# n_final = {self.n_final}\n# n_star = {n_star}\n")
        buf.write(f"# e_data = {self.e_data_label}\n# stop_reason = {self.stop_reason}\n")
        buf.write("k,n_request,v_measured,capped_reason\n")
        for s in self.steps:
            vm = "" if s.v_measured is None else repr(s.v_measured)
            buf.write(f"{s.k},{s.n_request},{vm},{s.capped}\n")
        return buf.getvalue()


def resolve_switch(policy: CollectionPolicy, points: Sequence[PerformancePoint]) -> float | None:
    if policy.family is not Family.PPL:
        return None
    s = policy.switch
    if s == "linear":
        return linear_switch(points)
    if s == "brute":
        return brute_force_switch(points)
    if s == "meta":
        return rf_predict(policy.meta_model, extract_features(points, policy.classes))
    return float(s)


def _sd_at(fit: FitResult, n: float) -> float:
    y = float(fit.predict(n))
    return float(score_sd(y, float(predictive_variance(fit, n))))


def simulate_collection(oracle: Oracle, init: Sequence[PerformancePoint], v_target: float,
                        policy: CollectionPolicy, seed: int = 0) -> CollectionTrace:
    if not 0.0 < v_target < 1.0:
        raise CollectionError(f"target score must lie in (0, 1), got {v_target}")
    init = sorted(init)
    if any(p.v >= v_target for p in init):
        raise CollectionError("the initial points already reach the target")
    rng = np.random.default_rng(seed)
    n_cap = policy.n_cap if policy.n_cap is not None else DEFAULT_CAP_FACTOR * init[-1].n
    N = resolve_switch(policy, init)
    n_obs = [float(p.n) for p in init]
    v_obs = [float(p.v) for p in init]
    steps: list[Step] = []
    stop = "max-steps"
    for k in range(1, policy.T + 1):
        fit = fit_family(policy.family, (np.array(n_obs), np.array(v_obs)), N=N, options=policy.options)
        n_max = max(n_obs)
        try:
            if policy.tau is None:
                mean_inv = family_inverse(fit.family, fit.params, v_target, fit.N, n_lo=n_max, n_cap=n_cap)
            else:
                mean_inv = invert_mean(fit, v_target, n_max, n_cap)
        except NonMonotoneError as exc:
            log.info("step %d: %s; treating target as unreachable", k, exc)
            mean_inv = math.inf
        sd_inv = None
        proposal, capped = mean_inv, ""
        if policy.tau is not None:
            sd_inv = invert_sd(fit, policy.tau / 3.0, n_max, n_cap)
            if sd_inv.n < proposal:
                proposal, capped = sd_inv.n, "sigma"
        if n_cap < proposal:
            proposal, capped = n_cap, "n-cap"
        n_req = math.ceil(proposal - 1e-9 * proposal) if capped == "" else math.floor(proposal)
        if n_req <= n_max:
            n_req, capped = math.ceil(GROWTH_FLOOR * n_max), "growth-floor"
        sd_req = _sd_at(fit, n_req) if fit.family is not Family.POWER_LAW3 or _pl_ok(fit, n_req) else math.nan
        if capped == "":
            steps.append(Step(k, n_req, None, capped, mean_inv, None if sd_inv is None else sd_inv.n, sd_req,
                              tuple(map(float, fit.params)), N))
            stop = "predicted"
            break
        v = oracle.measure(n_req, rng)
        steps.append(Step(k, n_req, v, capped, mean_inv, None if sd_inv is None else sd_inv.n, sd_req,
                          tuple(map(float, fit.params)), N))
        n_obs.append(float(n_req))
        v_obs.append(v)
        if v >= v_target:
            stop = "measured"
            break
    n_final = steps[-1].n_request
    n_star = required_samples(oracle, v_target)
    e_data = data_estimation_error(n_final, n_star) if math.isfinite(n_star) else math.nan
    return CollectionTrace(tuple(steps), K=len(steps), n_final=n_final, n_star=n_star, e_data=e_data,
                           stop_reason=stop, v_target=v_target, tau=policy.tau)


def _pl_ok(fit, n) -> bool:
    try:
        fit.predict(n)
        return True
    except PredictorError:
        return False


def check_trace(trace: CollectionTrace, T: int) -> list[str]:
    """Invariant violations of a trace (empty when it is well formed)."""
    problems = []
    ns = [s.n_request for s in trace.steps]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        problems.append("requests are not strictly increasing")
    if trace.K > T:
        problems.append(f"K={trace.K} exceeds T={T}")
    if trace.tau is not None:
        for s in trace.steps:
            if s.capped == "sigma" and not 3.0 * s.sd_at_request <= trace.tau:
                problems.append(f"step {s.k}: 3 sd = {3 * s.sd_at_request:.6g} exceeds tau")
    if trace.reachable and trace.e_data != data_estimation_error(trace.n_final, trace.n_star):
        problems.append("e_data does not match n_final and n_star")
    return problems


@dataclass(frozen=True)
class Scenario:
    """One collection problem: a synthetic truth, its few-shot points and a target."""
    name: str
    classes: int
    true_switch: float
    init: tuple[PerformancePoint, ...]
    oracle: Oracle = field(compare=False)
    v_target: float
    target_size: float


def plateau_ranges():
    """Generator ranges for curves that stay flat over the few-shot points."""
    from .synth import SynthRanges

    return SynthRanges(slope=(-0.05, 0.0), curvature=(-0.2, -0.1))


def plateau_scenarios(count: int, seed: int = 0, ranges=None,
                      target_fractions=(0.5, 0.6, 0.7, 0.8, 0.9)) -> list[Scenario]:
    """``count`` seeded scenarios with a noiseless PPL oracle.

    The target is the true score at a drawn fraction of the full-dataset
    budget, so ``n_star`` is always reachable.  Draws whose few-shot scores
    fall outside (0, 1) are skipped.
    """
    from .synth import SynthSpecError, curve_seed, gen_curve, sample_spec, true_log_error

    ranges = plateau_ranges() if ranges is None else ranges
    out: list[Scenario] = []
    i = 0
    while len(out) < count:
        ss = curve_seed(seed, i)
        rng = np.random.default_rng(ss)
        spec = sample_spec(rng, ranges, seed=int(ss.generate_state(1)[0]), name=f"plateau{i:03d}")
        i += 1
        try:
            curve = gen_curve(spec)
        except SynthSpecError:
            continue
        init = curve.fit_points
        C = spec.classes
        oracle = oracle_from_function(lambda n, sp=spec: true_log_error(sp, n),
                                      max_n=int(DEFAULT_CAP_FACTOR * init[-1].n), min_n=C)
        size = ranges.budget_per_class * C * float(rng.choice(target_fractions))
        out.append(Scenario(spec.name, C, spec.N, tuple(init), oracle, float(oracle.true_score(size)), size))
    return out
