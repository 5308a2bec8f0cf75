"""Evaluation metrics. Score errors are reported in percentage points."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

INF_THRESHOLD = 1000.0
INF_LABEL = "inf"


class AlignmentError(ValueError):
    pass


def _aligned(truth, pred):
    """Accept points / (n, v) pairs for ``truth`` and scores or (n, v) pairs for ``pred``."""
    t_n, t_v = _unpack(truth)
    p_n, p_v = _unpack(pred)
    if t_v.size == 0:
        raise AlignmentError("no points to compare")
    if t_v.shape != p_v.shape:
        raise AlignmentError(f"length mismatch: {t_v.size} truth vs {p_v.size} predictions")
    if t_n is not None and p_n is not None and not np.array_equal(t_n, p_n):
        raise AlignmentError("truth and predictions are at different sample counts")
    return t_v, p_v


def _unpack(seq):
    seq = list(seq)
    if seq and hasattr(seq[0], "n"):
        return np.array([p.n for p in seq], dtype=float), np.array([p.v for p in seq], dtype=float)
    if seq and np.ndim(seq[0]) == 1 and len(seq[0]) == 2:
        arr = np.asarray(seq, dtype=float)
        return arr[:, 0], arr[:, 1]
    return None, np.asarray(seq, dtype=float)


def mean_prediction_error(truth, pred) -> float:
    t, p = _aligned(truth, pred)
    return float(np.mean(np.abs(t - p)) * 100.0)


def rmse(truth, pred) -> float:
    t, p = _aligned(truth, pred)
    return float(math.sqrt(np.mean((t - p) ** 2)) * 100.0)


def data_estimation_error(n_final, n_star) -> float:
    """Signed relative error of the collected size; negative means under-estimate."""
    if not n_star >= 1:
        raise ValueError(f"required sample count must be >= 1, got {n_star}")
    return (n_final - n_star) / n_star


def format_e_data(e_data: float | None, digits: int = 2) -> str:
    if e_data is None or (isinstance(e_data, float) and math.isnan(e_data)):
        return "nan"
    if e_data > INF_THRESHOLD:
        return INF_LABEL
    return f"{e_data:.{digits}f}"


@dataclass(frozen=True)
class EvalReport:
    e_perf: float
    rmse: float
    per_point: tuple[tuple[float, float, float], ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# e_perf = {self.e_perf!r}\n# rmse = {self.rmse!r}\n")
        buf.write("n,v_true,v_pred\n")
        for n, t, p in self.per_point:
            buf.write(f"{n:g},{t!r},{p!r}\n")
        return buf.getvalue()


def evaluate(points, predicted) -> EvalReport:
    """Build an :class:`EvalReport` from truth points and aligned predicted scores."""
    predicted = np.asarray(predicted, dtype=float)
    rows = tuple((float(p.n), float(p.v), float(q)) for p, q in zip(points, predicted))
    return EvalReport(mean_prediction_error(points, predicted), rmse(points, predicted), rows)
