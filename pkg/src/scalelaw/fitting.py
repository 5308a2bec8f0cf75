"""Least-squares fitting of predictor families in log-error space.

Residuals are ``y_i - y_hat(n_i)`` with ``y_i = log(1 - v(n_i))``, unweighted.
The solver is a plain Levenberg-Marquardt loop with multiplicative damping.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .predictors import Family, family_eval, family_jacobian, format_params

log = logging.getLogger(__name__)

DEGENERATE_COND = 1e12


class FitError(RuntimeError):
    pass


class UnderdeterminedError(FitError):
    pass


class NumericalError(FitError):
    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class LMOptions:
    lam0: float = 1e-3
    lam_factor: float = 10.0
    lam_max: float = 1e16
    gtol: float = 1e-10
    xtol: float = 1e-10
    max_iter: int = 200
    # scale (J^T J)^-1 by the residual variance ||r||^2 / (m - p)
    scale_covariance: bool = True


@dataclass(frozen=True)
class FitResult:
    family: Family
    params: np.ndarray
    N: float | None
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    degenerate: bool = False
    fit_range: tuple[int, int] | None = None
    history: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def predict(self, n):
        return family_eval(self.family, self.params, n, self.N)

    def to_text(self) -> str:
        out = format_params(self.family, self.params, self.N, self.fit_range)
        out += f"residual_norm = {self.residual_norm!r}\n"
        out += f"converged = {str(self.converged).lower()}\n"
        out += f"iterations = {self.iterations}\n"
        out += f"degenerate = {str(self.degenerate).lower()}\n"
        out += "covariance = " + " ".join(repr(float(x)) for x in self.covariance.ravel()) + "\n"
        return out


def _as_arrays(points):
    if isinstance(points, tuple) and len(points) == 2 and not hasattr(points[0], "n"):
        n, v = points
    else:
        n = [p.n for p in points]
        v = [p.v for p in points]
    return np.asarray(n, dtype=float), np.asarray(v, dtype=float)


def param_covariance(J, residual_variance: float = 1.0):
    """``(J^T J)^-1`` times ``residual_variance``.

    Returns ``(cov, degenerate)``; a pseudo-inverse is used when ``J^T J`` is
    singular or its condition number exceeds 1e12.
    """
    J = np.asarray(J, dtype=float)
    if not np.all(np.isfinite(J)):
        raise NumericalError("Jacobian has non-finite entries")
    JtJ = J.T @ J
    cond = np.linalg.cond(JtJ) if JtJ.size else math.inf
    degenerate = not (cond <= DEGENERATE_COND)
    if degenerate:
        cov = np.linalg.pinv(JtJ, rcond=1e-12, hermitian=True)
    else:
        cov = np.linalg.inv(JtJ)
    cov = 0.5 * (cov + cov.T) * residual_variance
    return cov, degenerate


def _residuals(family, theta, n, y, N):
    with np.errstate(all="ignore"):
        r = y - family_eval(family, theta, n, N, check_range=False)
    return r if np.all(np.isfinite(r)) else None


def lm_fit(family, points, theta0, N=None, options: LMOptions = LMOptions()) -> FitResult:
    """Levenberg-Marquardt fit of ``family`` to ``points``.

    ``points`` is a sequence of :class:`PerformancePoint` or an ``(n, v)`` pair
    of arrays.  Trial steps that leave the family's domain are rejected like
    any other uphill step.
    """
    family = Family(family)
    n, v = _as_arrays(points)
    p = family.n_params
    if n.size < p:
        raise UnderdeterminedError(f"{family.value} needs at least {p} points, got {n.size}")
    y = np.log1p(-v)
    lo, hi = family.bounds
    theta = np.clip(np.array(theta0, dtype=float), lo, hi)
    r = _residuals(family, theta, n, y, N)
    if r is None:
        raise NumericalError("non-finite residual at the initial parameters", 0)
    cost = float(r @ r)
    lam = options.lam0
    history = [math.sqrt(cost)]
    converged = False
    it = 0
    for it in range(1, options.max_iter + 1):
        J = family_jacobian(family, theta, n, N)
        if not np.all(np.isfinite(J)):
            raise NumericalError("non-finite Jacobian", it)
        g = J.T @ r
        # components pinned at a bound and pushing outward do not count
        free = ~(((theta <= lo) & (g < 0)) | ((theta >= hi) & (g > 0)))
        if np.max(np.abs(g[free]), initial=0.0) < options.gtol:
            converged = True
            it -= 1
            break
        JtJ = J.T @ J
        diag = np.maximum(np.diag(JtJ), 1e-12 * max(1.0, float(np.max(np.diag(JtJ)))))
        accepted = False
        while lam <= options.lam_max:
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= options.lam_factor
                continue
            trial = np.clip(theta + step, lo, hi)
            r_new = _residuals(family, trial, n, y, N)
            if r_new is not None and float(r_new @ r_new) <= cost:
                accepted = True
                break
            lam *= options.lam_factor
        if not accepted:
            # no descent direction left at any damping: at a (numerical) minimum
            converged = True
            break
        delta = trial - theta
        theta, r = trial, r_new
        cost = float(r @ r)
        history.append(math.sqrt(cost))
        lam = max(lam / options.lam_factor, 1e-15)
        if np.linalg.norm(delta) < options.xtol * (np.linalg.norm(theta) + options.xtol):
            converged = True
            break
    J = family_jacobian(family, theta, n, N)
    dof = n.size - p
    s2 = cost / dof if (options.scale_covariance and dof > 0) else 1.0
    cov, degenerate = param_covariance(J, s2)
    if degenerate:
        log.info("%s fit has a singular J^T J; covariance is a pseudo-inverse", family.value)
    return FitResult(family=family, params=theta, N=None if N is None else float(N), covariance=cov,
                     residual_norm=math.sqrt(cost), converged=converged, iterations=it,
                     degenerate=degenerate, fit_range=(int(n.min()), int(n.max())), history=tuple(history))


def loglinear_init(n, v):
    """Ordinary regression of ``log(1 - v)`` on ``log n``: ``(intercept, slope)``."""
    ln_n = np.log(np.asarray(n, dtype=float))
    y = np.log1p(-np.asarray(v, dtype=float))
    if ln_n.size == 1 or np.ptp(ln_n) == 0:
        return np.array([float(y.mean()), 0.0])
    slope, intercept = np.polyfit(ln_n, y, 1)
    return np.array([intercept, slope])


def initial_params(family, n, v, N=None):
    family = Family(family)
    n = np.asarray(n, dtype=float)
    v = np.asarray(v, dtype=float)
    a, b = loglinear_init(n, v)
    if family is Family.LOG_LINEAR:
        return np.array([a, b])
    if family is Family.PPL:
        return np.array([a, b, 0.0])
    if family is Family.POWER_LAW3:
        return np.array([math.exp(a), b, 0.0])
    # two-point heuristics from the end points
    n1, n2, v1, v2 = n[0], n[-1], v[0], v[-1]
    if family is Family.LOGARITHMIC:
        slope = (v2 - v1) / (math.log(n2) - math.log(n1)) if n2 > n1 else 0.0
        return np.array([slope, v1 - slope * math.log(n1)])
    if family is Family.ALGEBRAIC:
        # 1 - v = c + a / (1 + b n) with c = 0, matched exactly at both ends
        e1, e2 = 1.0 - v1, 1.0 - v2
        if n2 > n1 and e1 > e2 > 0:
            b = (e1 - e2) / (e2 * n2 - e1 * n1) if e2 * n2 > e1 * n1 else 1.0 / n1
            return np.array([e1 * (1.0 + b * n1), b, 0.0])
        return np.array([e1 * (1.0 + 1.0 / n1), 1.0 / n1, 0.0])
    if family is Family.ARCTAN:
        # v = (2/pi) arctan(a (pi/2) n + b) - c with c = 0, matched at both ends
        t1, t2 = math.tan(math.pi / 2.0 * v1), math.tan(math.pi / 2.0 * v2)
        if n2 > n1:
            a = (t2 - t1) / (math.pi / 2.0 * (n2 - n1))
            return np.array([a, t1 - a * math.pi / 2.0 * n1, 0.0])
        return np.array([0.0, t1, 0.0])
    raise AssertionError(family)


def fit_family(family, points, N=None, theta0=None, options: LMOptions = LMOptions()) -> FitResult:
    """Fit ``family`` from its deterministic default initialization."""
    family = Family(family)
    n, v = _as_arrays(points)
    if n.size < family.n_params:
        raise UnderdeterminedError(f"{family.value} needs at least {family.n_params} points, got {n.size}")
    if theta0 is None:
        theta0 = initial_params(family, n, v, N)
    return lm_fit(family, (n, v), theta0, N, options)


def fit_ppl(points, N, options: LMOptions = LMOptions()) -> FitResult:
    """PPL fit at a fixed switch point ``N``."""
    if not N > 0:
        raise ValueError(f"switch point must be positive, got {N}")
    return fit_family(Family.PPL, points, N=N, options=options)


def parse_fit(text: str) -> FitResult:
    """Read back :meth:`FitResult.to_text`."""
    from .predictors import parse_params

    base = parse_params(text)
    kv = dict((s.strip() for s in line.split("=", 1)) for line in text.splitlines() if "=" in line)
    p = len(base["params"])
    cov = np.array([float(x) for x in kv["covariance"].split()]).reshape(p, p)
    fr = base.get("fit_range")
    return FitResult(family=base["family"], params=base["params"], N=base["N"], covariance=cov,
                     residual_norm=float(kv["residual_norm"]), converged=kv["converged"] == "true",
                     iterations=int(kv["iterations"]), degenerate=kv["degenerate"] == "true",
                     fit_range=None if fr is None else (int(fr[0]), int(fr[1])))
