"""Predictive bands for fitted predictors.

The log-error prediction ``y_hat`` is treated as Gaussian with variance
``g(n)^T Sigma g(n)``, where ``g`` is the parameter gradient (``alpha(n)`` for
the PPL).  The score ``1 - exp(y)`` then has log-normal moments.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .fitting import FitResult, NumericalError
from .predictors import INVERSE_GRID, INVERSE_RTOL, DomainError, alpha_vec, family_jacobian, invert_increasing

__all__ = [
    "alpha_vec", "PredictiveBand", "predictive_variance", "score_mean", "score_sd", "band",
    "invert_mean", "invert_sd", "SdInverse", "DegenerateBandWarning", "band_csv",
]

PSD_TOL = 1e-9


class DegenerateBandWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class PredictiveBand:
    n: np.ndarray
    y_hat: np.ndarray
    sigma2_y: np.ndarray
    mu_v: np.ndarray
    sigma_v: np.ndarray


def _check_psd(cov):
    cov = np.asarray(cov, dtype=float)
    if not np.all(np.isfinite(cov)):
        raise NumericalError("covariance has non-finite entries")
    if cov.size:
        w = np.linalg.eigvalsh(0.5 * (cov + cov.T))
        if w.min() < -PSD_TOL * max(1.0, abs(w.max())):
            raise NumericalError(f"covariance is not positive semidefinite (min eigenvalue {w.min():.3g})")
    return cov


def predictive_variance(fit: FitResult, n):
    """Variance of the log-error prediction at ``n``."""
    cov = _check_psd(fit.covariance)
    g = family_jacobian(fit.family, fit.params, n, fit.N)
    s2 = np.einsum("...i,ij,...j->...", g, cov, g)
    return np.maximum(s2, 0.0)


def score_mean(y_hat, sigma2_y):
    """``1 - exp(y_hat + sigma2_y / 2)``."""
    y_hat = np.asarray(y_hat, dtype=float)
    sigma2_y = np.asarray(sigma2_y, dtype=float)
    if np.any(sigma2_y < 0):
        raise DomainError("variance must be non-negative")
    expo = y_hat + 0.5 * sigma2_y
    if np.any(expo >= 0):
        warnings.warn("predicted mean score is not positive; band is degenerate", DegenerateBandWarning,
                      stacklevel=2)
    with np.errstate(over="ignore"):
        return -np.expm1(expo)


def score_sd(y_hat, sigma2_y):
    """Standard deviation of ``1 - exp(Y)`` for ``Y ~ Normal(y_hat, sigma2_y)``."""
    y_hat = np.asarray(y_hat, dtype=float)
    sigma2_y = np.asarray(sigma2_y, dtype=float)
    if np.any(sigma2_y < 0):
        raise DomainError("variance must be non-negative")
    with np.errstate(over="ignore"):
        return np.exp(y_hat + 0.5 * sigma2_y) * np.sqrt(np.expm1(sigma2_y))


def band(fit: FitResult, n) -> PredictiveBand:
    n = np.asarray(n, dtype=float)
    y = fit.predict(n)
    s2 = predictive_variance(fit, n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateBandWarning)
        mu = score_mean(y, s2)
    return PredictiveBand(n=n, y_hat=y, sigma2_y=s2, mu_v=mu, sigma_v=score_sd(y, s2))


def _mu(fit):
    def fn(n):
        y = fit.predict(n)
        s2 = predictive_variance(fit, n)
        return -np.expm1(y + 0.5 * s2)
    return fn


def _sigma(fit):
    def fn(n):
        return score_sd(fit.predict(n), predictive_variance(fit, n))
    return fn


def invert_mean(fit: FitResult, v_target: float, n_lo: float, n_cap: float) -> float:
    """Smallest ``n`` in ``[n_lo, n_cap]`` whose band mean reaches ``v_target``; ``inf`` if none."""
    if not 0.0 < v_target < 1.0:
        raise DomainError(f"target score must lie in (0, 1), got {v_target}")
    return invert_increasing(_mu(fit), v_target, n_lo, n_cap)


@dataclass(frozen=True)
class SdInverse:
    n: float
    at_floor: bool = False
    binds: bool = True


def invert_sd(fit: FitResult, sd_budget: float, n_lo: float, n_cap: float,
              grid: int = INVERSE_GRID, rtol: float = INVERSE_RTOL) -> SdInverse:
    """Prediction horizon set by a standard-deviation budget.

    Returns the largest ``n`` such that the score sd stays within
    ``sd_budget`` on all of ``[n_lo, n]``, i.e. the point just before the
    first upward crossing.  ``binds`` is false when the budget never binds
    (``n == n_cap``); ``at_floor`` is set when ``n_lo`` already exceeds it.
    """
    if not sd_budget > 0:
        raise DomainError("sd budget must be positive")
    if not 0 < n_lo <= n_cap:
        raise DomainError(f"bad search range [{n_lo}, {n_cap}]")
    sig = _sigma(fit)
    if float(sig(n_lo)) > sd_budget:
        return SdInverse(float(n_lo), at_floor=True)
    ln_grid = np.linspace(math.log(n_lo), math.log(n_cap), grid)
    vals = sig(np.exp(ln_grid))
    over = np.flatnonzero(vals > sd_budget)
    if not over.size:
        return SdInverse(float(n_cap), binds=False)
    lo, hi = ln_grid[over[0] - 1], ln_grid[over[0]]
    tol = math.log1p(rtol)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if float(sig(math.exp(mid))) > sd_budget:
            hi = mid
        else:
            lo = mid
    return SdInverse(math.exp(lo))


def band_csv(b: PredictiveBand, comments=()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    buf.write("n,y_hat,sigma2_y,mu_v,sigma_v\n")
    for row in zip(b.n, b.y_hat, b.sigma2_y, b.mu_v, b.sigma_v):
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()
