"""Learning-curve fitting and data-requirement estimation with a piecewise power law."""
from .curve_data import (CurveDictionary, LearningCurve, PerformancePoint, Task, make_curve, parse_curve, read_curve,
                         write_curve)
from .fitting import FitResult, LMOptions, fit_family, fit_ppl, lm_fit
from .predictors import Family, family_eval, family_inverse, family_score, ppl_eval
from .uncertainty import band, score_mean, score_sd

__version__ = "0.1.0"

__all__ = [
    "CurveDictionary", "LearningCurve", "PerformancePoint", "Task", "make_curve", "parse_curve",
    "read_curve", "write_curve",
    "FitResult", "LMOptions", "fit_family", "fit_ppl", "lm_fit",
    "Family", "family_eval", "family_inverse", "family_score", "ppl_eval",
    "band", "score_mean", "score_sd", "__version__",
]
