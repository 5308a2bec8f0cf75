"""Synthetic learning curves drawn from a piecewise power law.

Dictionary draws are expressed in a local log coordinate ``u = log(n / C)``
(``u = 0`` at one sample per class): ``y = a + b u + c u^2`` up to the switch
point, so ``a`` is the log error at one shot per class and ``b`` its initial
slope.  The curvature ``c`` equals the PPL's ``theta3`` exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curve_data import CurveDictionary, LearningCurve, PerformancePoint, Task
from .predictors import ppl_eval

MAX_RETRIES = 1000


class SynthSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    theta: tuple[float, float, float]
    N: float
    grid: tuple[int, ...]
    classes: int
    noise_sd: float = 0.02
    seed: int = 0
    fit_count: int | None = None
    name: str = "synthetic"

    def __post_init__(self):
        if self.N <= 0:
            raise SynthSpecError("switch point must be positive")
        if self.noise_sd < 0:
            raise SynthSpecError("noise_sd must be non-negative")
        g = list(self.grid)
        if not g or any(b <= a for a, b in zip(g, g[1:])) or g[0] < 1:
            raise SynthSpecError("grid must be strictly increasing positive integers")


def local_to_theta(a, b, c, ref):
    """Convert ``a + b u + c u^2`` with ``u = log(n / ref)`` to PPL theta."""
    s = math.log(ref)
    return (a - b * s + c * s * s, b - 2.0 * c * s, c)


def true_log_error(spec: SynthSpec, n):
    return ppl_eval(spec.theta, spec.N, n)


def gen_curve(spec: SynthSpec, task=Task.CLASSIFICATION) -> LearningCurve:
    """Sample scores on ``spec.grid``; noise is Gaussian in log-error space."""
    rng = np.random.default_rng(spec.seed)
    n = np.asarray(spec.grid, dtype=float)
    y = true_log_error(spec, n)
    if spec.noise_sd > 0:
        y = y + rng.normal(0.0, spec.noise_sd, size=n.size)
    v = -np.expm1(y)
    bad = np.flatnonzero(~((v > 0) & (v < 1)))
    if bad.size:
        raise SynthSpecError(f"generated score {v[bad[0]]!r} at n={int(n[bad[0]])} is outside (0, 1)")
    points = tuple(PerformancePoint(int(k), float(s)) for k, s in zip(spec.grid, v))
    return LearningCurve(name=spec.name, classes=spec.classes, points=points, task=task,
                         fit_count=spec.fit_count, true_switch=float(spec.N))


@dataclass(frozen=True)
class SynthRanges:
    intercept: tuple[float, float] = (-0.5, 0.0)
    slope: tuple[float, float] = (-0.2, 0.0)
    curvature: tuple[float, float] = (-0.2, -0.02)
    switch_per_class: tuple[float, float] = (2.0, 50.0)
    classes: tuple[int, int] = (5, 257)
    shots: tuple[int, ...] = (1, 2, 3, 4, 5)
    eval_fractions: tuple[float, ...] = field(default_factory=lambda: tuple(np.round(np.arange(0.10, 1.0001, 0.05), 2)))
    # full-dataset size: a fixed total, or samples per class when budget is None
    budget: int | None = None
    budget_per_class: int = 100
    noise_sd: float = 0.02
    # "slope": the switch sits where the quadratic's log-log slope reaches a
    # drawn high-shot slope; "independent": log-uniform N / C
    switch_rule: str = "slope"
    high_shot_slope: tuple[float, float] = (-0.6, -0.3)

    def grid_for(self, classes: int) -> tuple[tuple[int, ...], int]:
        """Return ``(grid, fit_count)``: few-shot fit sizes, then evaluation sizes."""
        budget = self.budget if self.budget is not None else self.budget_per_class * classes
        fit = sorted({s * classes for s in self.shots})
        evals = sorted({int(round(f * budget)) for f in self.eval_fractions} - set(fit))
        evals = [e for e in evals if e > fit[-1]]
        return tuple(fit + evals), len(fit)


def sample_spec(rng: np.random.Generator, ranges: SynthRanges = SynthRanges(), seed: int = 0,
                name: str = "synthetic") -> SynthSpec:
    """Draw one generator: uniform shape coefficients, log-uniform ``N / C`` and ``C``."""
    lo_c, hi_c = ranges.classes
    classes = int(round(math.exp(rng.uniform(math.log(lo_c), math.log(hi_c)))))
    lo_s, hi_s = (math.log(x) for x in ranges.switch_per_class)
    for _ in range(MAX_RETRIES):
        a = rng.uniform(*ranges.intercept)
        b = rng.uniform(*ranges.slope)
        c = rng.uniform(*ranges.curvature)
        if ranges.switch_rule == "independent":
            u_switch = rng.uniform(lo_s, hi_s)
            break
        if ranges.switch_rule != "slope":
            raise SynthSpecError(f"unknown switch rule {ranges.switch_rule!r}")
        # slope of a + b u + c u^2 is b + 2 c u
        u_switch = (rng.uniform(*ranges.high_shot_slope) - b) / (2.0 * c)
        if lo_s <= u_switch <= hi_s:
            break
    else:
        raise SynthSpecError("switch ranges are infeasible")
    per_class = math.exp(u_switch)
    grid, m = ranges.grid_for(classes)
    return SynthSpec(theta=local_to_theta(a, b, c, classes), N=per_class * classes, grid=grid,
                     classes=classes, noise_sd=ranges.noise_sd, seed=seed, fit_count=m, name=name)


def curve_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


def gen_dictionary(count: int, ranges: SynthRanges = SynthRanges(), seed: int = 0,
                   task=Task.CLASSIFICATION, prefix: str = "synth") -> CurveDictionary:
    """``count`` curves, each drawn from its own substream of ``seed``."""
    if count < 2:
        raise SynthSpecError("a dictionary needs at least 2 curves")
    curves = []
    for i in range(count):
        ss = curve_seed(seed, i)
        rng = np.random.default_rng(ss)
        noise_seed = int(ss.generate_state(1)[0])
        for _ in range(MAX_RETRIES):
            spec = sample_spec(rng, ranges, seed=noise_seed, name=f"{prefix}{i:03d}")
            try:
                curves.append(gen_curve(spec, task))
                break
            except SynthSpecError:
                noise_seed += 1
        else:
            raise SynthSpecError(f"could not draw a feasible curve {i} in {MAX_RETRIES} tries")
    return CurveDictionary(tuple(curves), task)
