"""Predictor families in log-error space.

Every family maps a sample count ``n`` to ``y = log(1 - v_hat(n))``.  The
piecewise power law (PPL) is quadratic in ``log n`` up to the switch point
``N`` and linear beyond it, with the linear coefficients tied to the
quadratic ones so that value and slope agree at ``N``.

Natural logarithms are used throughout.
"""
from __future__ import annotations

import math
import warnings
from enum import Enum

import numpy as np

# clip for score-space baseline forms before taking log(1 - v)
BASELINE_EPS = 1e-6
INVERSE_GRID = 64
INVERSE_RTOL = 1e-6


class PredictorError(ValueError):
    pass


class DomainError(PredictorError):
    pass


class PredictionRangeError(PredictorError):
    """A score-space form produced an error rate outside (0, 1)."""

    def __init__(self, n, message):
        super().__init__(message)
        self.n = n


class NonMonotoneError(PredictorError):
    """The predicted score decreases somewhere on the search interval."""

    def __init__(self, lo, hi, message=None):
        super().__init__(message or f"prediction is not monotone on [{lo:.6g}, {hi:.6g}]")
        self.interval = (lo, hi)


class MonotonicityWarning(RuntimeWarning):
    pass


class Family(str, Enum):
    PPL = "ppl"
    POWER_LAW3 = "powerlaw3"
    LOG_LINEAR = "loglinear"
    ARCTAN = "arctan"
    ALGEBRAIC = "algebraic"
    LOGARITHMIC = "logarithmic"

    @property
    def n_params(self) -> int:
        return 2 if self in (Family.LOG_LINEAR, Family.LOGARITHMIC) else 3

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Box constraints used by the fitter; only the power law has any.

        Its scale and asymptotic error rate are non-negative and the
        asymptote stays below 1.
        """
        lo = np.full(self.n_params, -np.inf)
        hi = np.full(self.n_params, np.inf)
        if self is Family.POWER_LAW3:
            lo[0], lo[2], hi[2] = 0.0, 0.0, 1.0 - 1e-12
        return lo, hi


def _as_positive(n, what="n"):
    arr = np.asarray(n, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{what} must be positive and finite")
    return arr


def ppl_derived_params(theta, N):
    """Linear-branch intercept and slope ``(theta4, theta5)`` implied by continuity at ``N``."""
    if not N > 0:
        raise DomainError(f"switch point must be positive, got {N}")
    t1, t2, t3 = (float(t) for t in theta)
    ln_N = math.log(N)
    return t1 - t3 * ln_N**2, t2 + 2.0 * t3 * ln_N


def alpha_vec(N, n):
    """Design row of the PPL, linear in theta for fixed ``N``.

    Accepts scalar or array ``n``; returns shape ``(..., 3)``.
    """
    if not N > 0:
        raise DomainError(f"switch point must be positive, got {N}")
    ln_n = np.log(_as_positive(n))
    ln_N = math.log(N)
    quad = np.where(ln_n <= ln_N, ln_n**2, 2.0 * ln_N * ln_n - ln_N**2)
    return np.stack([np.ones_like(ln_n), ln_n, quad], axis=-1)


def ppl_eval(theta, N, n):
    return alpha_vec(N, n) @ np.asarray(theta, dtype=float)


def ppl_jacobian(theta, N, n):
    # the PPL is linear in theta for fixed N
    return alpha_vec(N, n)


def _check_params(family: Family, params, N):
    p = np.asarray(params, dtype=float)
    if p.shape != (family.n_params,):
        raise PredictorError(f"{family.value} expects {family.n_params} parameters, got shape {p.shape}")
    if family is Family.PPL and N is None:
        raise PredictorError("PPL requires a switch point N")
    return p


def _baseline_score(family: Family, p, n):
    if family is Family.ARCTAN:
        return 2.0 / math.pi * np.arctan(p[0] * math.pi / 2.0 * n + p[1]) - p[2]
    if family is Family.ALGEBRAIC:
        return 1.0 - p[2] - p[0] / (1.0 + p[1] * n)
    if family is Family.LOGARITHMIC:
        return p[1] + p[0] * np.log(n)
    raise AssertionError(family)


def _baseline_score_grad(family: Family, p, n):
    if family is Family.ARCTAN:
        s = p[0] * math.pi / 2.0 * n + p[1]
        d = 2.0 / math.pi / (1.0 + s**2)
        return np.stack([d * math.pi / 2.0 * n, d, -np.ones_like(n)], axis=-1)
    if family is Family.ALGEBRAIC:
        den = 1.0 + p[1] * n
        return np.stack([-1.0 / den, p[0] * n / den**2, -np.ones_like(n)], axis=-1)
    if family is Family.LOGARITHMIC:
        return np.stack([np.log(n), np.ones_like(n)], axis=-1)
    raise AssertionError(family)


def family_eval(family, params, n, N=None, check_range=True):
    """``log(1 - v_hat(n))`` under ``family``.

    Raises :class:`PredictionRangeError` when a power law predicts an error
    rate outside (0, 1); with ``check_range=False`` the log is taken anyway
    (``nan`` for non-positive error rates), which is what the fitter wants.
    """
    family = Family(family)
    p = _check_params(family, params, N)
    n = _as_positive(n)
    if family is Family.PPL:
        return ppl_eval(p, N, n)
    if family is Family.LOG_LINEAR:
        return p[0] + p[1] * np.log(n)
    if family is Family.POWER_LAW3:
        err = p[0] * n ** p[1] + p[2]
        if not check_range:
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.log(err)
        bad = ~((err > 0) & (err < 1))
        if np.any(bad):
            where = np.atleast_1d(n)[np.atleast_1d(bad)][0]
            raise PredictionRangeError(where, f"power law error rate outside (0, 1) at n={where:.6g}")
        return np.log(err)
    v = np.clip(_baseline_score(family, p, n), BASELINE_EPS, 1.0 - BASELINE_EPS)
    return np.log1p(-v)


def family_jacobian(family, params, n, N=None):
    """Partial derivatives of ``family_eval`` w.r.t. the parameters, shape ``(..., p)``."""
    family = Family(family)
    p = _check_params(family, params, N)
    n = _as_positive(n)
    if family is Family.PPL:
        return ppl_jacobian(p, N, n)
    if family is Family.LOG_LINEAR:
        return np.stack([np.ones_like(n), np.log(n)], axis=-1)
    if family is Family.POWER_LAW3:
        pw = n ** p[1]
        err = p[0] * pw + p[2]
        return np.stack([pw / err, p[0] * pw * np.log(n) / err, 1.0 / err], axis=-1)
    v = _baseline_score(family, p, n)
    inside = (v > BASELINE_EPS) & (v < 1.0 - BASELINE_EPS)
    # d/dp log(1 - v) = -dv/dp / (1 - v); zero where the clip is active
    scale = np.where(inside, -1.0 / (1.0 - np.clip(v, BASELINE_EPS, 1.0 - BASELINE_EPS)), 0.0)
    return _baseline_score_grad(family, p, n) * scale[..., None]


def family_score(family, params, n, N=None):
    """Predicted score ``v_hat(n)``; power-law error rates are clipped to [0, 1]."""
    family = Family(family)
    p = _check_params(family, params, N)
    n = _as_positive(n)
    if family is Family.POWER_LAW3:
        return 1.0 - np.clip(p[0] * n ** p[1] + p[2], 0.0, 1.0)
    return -np.expm1(family_eval(family, p, n, N))


def invert_increasing(fn, target, n_lo, n_cap, grid=INVERSE_GRID, rtol=INVERSE_RTOL):
    """Smallest ``n`` in ``[n_lo, n_cap]`` with ``fn(n) >= target``.

    ``fn`` must be non-decreasing on the part of the range before the first
    crossing (checked on a log grid).  Returns ``math.inf`` if the target is
    never reached.
    """
    if not 0 < n_lo <= n_cap:
        raise DomainError(f"bad search range [{n_lo}, {n_cap}]")
    ln_grid = np.linspace(math.log(n_lo), math.log(n_cap), grid)
    vals = np.asarray(fn(np.exp(ln_grid)), dtype=float)
    hit = np.flatnonzero(vals >= target)
    stop = hit[0] if hit.size else grid - 1
    drops = np.flatnonzero(np.diff(vals[: stop + 1]) < -1e-12 * np.maximum(1.0, np.abs(vals[:stop])))
    if drops.size:
        i = drops[0]
        raise NonMonotoneError(math.exp(ln_grid[i]), math.exp(ln_grid[i + 1]))
    if not hit.size:
        return math.inf
    if stop == 0:
        return float(n_lo)
    lo, hi = ln_grid[stop - 1], ln_grid[stop]
    tol = math.log1p(rtol)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if float(fn(math.exp(mid))) >= target:
            hi = mid
        else:
            lo = mid
    return math.exp(hi)


def family_inverse(family, params, v_target, N=None, n_lo=1.0, n_cap=None):
    """Smallest ``n >= n_lo`` whose predicted score reaches ``v_target``.

    Returns ``math.inf`` when the target is not reached by ``n_cap``.
    """
    if not 0.0 < v_target < 1.0:
        raise DomainError(f"target score must lie in (0, 1), got {v_target}")
    if n_cap is None:
        n_cap = 1e4 * n_lo
    return invert_increasing(lambda n: family_score(family, params, n, N), v_target, n_lo, n_cap)


def ppl_slope(theta, N, n):
    """d y / d log n of the PPL; positive values mean a decreasing score."""
    ln_n = np.log(_as_positive(n))
    ln_N = math.log(N)
    return theta[1] + 2.0 * theta[2] * np.minimum(ln_n, ln_N)


def ppl_is_monotone(theta, N, n_lo, n_hi, warn=True) -> bool:
    """Whether the PPL score is non-decreasing on ``[n_lo, n_hi]``.

    The log-log slope is affine in ``log n`` up to ``N`` and constant after,
    so checking both ends of the clipped range suffices.
    """
    ends = np.array([n_lo, min(max(n_hi, n_lo), N) if N > n_lo else n_lo, n_hi], dtype=float)
    ok = bool(np.all(ppl_slope(theta, N, ends) <= 0.0))
    if not ok and warn:
        warnings.warn(f"fitted PPL is not monotone on [{n_lo:.6g}, {n_hi:.6g}]", MonotonicityWarning, stacklevel=2)
    return ok


def format_params(family, params, N=None, fit_range=None) -> str:
    """Key-value text form of a fitted predictor."""
    lines = [f"family = {Family(family).value}",
             "params = " + " ".join(repr(float(x)) for x in params)]
    if N is not None:
        lines.append(f"N = {float(N)!r}")
    if fit_range is not None:
        lines.append(f"fit_range = {fit_range[0]!r} {fit_range[1]!r}")
    return "\n".join(lines) + "\n"


def parse_params(text: str):
    """Inverse of :func:`format_params`; returns a dict."""
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#") or "=" not in line:
            continue
        key, _, val = (s.strip() for s in line.partition("="))
        out[key] = val
    result = {"family": Family(out["family"]), "params": np.array([float(x) for x in out["params"].split()])}
    result["N"] = float(out["N"]) if "N" in out else None
    if "fit_range" in out:
        result["fit_range"] = tuple(float(x) for x in out["fit_range"].split())
    return result
