"""
metrics.py

Accuracy metrics for cost estimates: q-error, pearson correlation and nearest-rank percentiles.
"""
import logging
import math
from typing import Sequence

import numpy as np

from src.util.errors import LengthMismatch


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.eval.metrics")

# Both operands of the q-error are clamped to at least this many milliseconds
QERROR_EPS = 1e-6


def qerror(actual: float, predict: float) -> float:
    a, p = max(actual, QERROR_EPS), max(predict, QERROR_EPS)
    return max(a / p, p / a)


def qerrors(actuals: Sequence[float], predicts: Sequence[float]) -> np.ndarray:
    a = np.maximum(np.asarray(actuals, dtype=np.float64), QERROR_EPS)
    p = np.maximum(np.asarray(predicts, dtype=np.float64), QERROR_EPS)
    if a.shape != p.shape:
        raise LengthMismatch(f"{len(a)} actuals vs {len(p)} predictions")
    return np.maximum(a / p, p / a)


def pearson(actuals: Sequence[float], predicts: Sequence[float]) -> float:
    """
    Pearson correlation with population standard deviations. A constant input has no defined correlation; it is
    reported as 0 with a warning.

    :param actuals: Measured costs.
    :param predicts: Predicted costs (same length, >= 2).

    :return: Correlation in [-1, 1].
    """
    a, p = np.asarray(actuals, dtype=np.float64), np.asarray(predicts, dtype=np.float64)
    if len(a) != len(p) or len(a) < 2:
        raise LengthMismatch(f"pearson needs two vectors of equal length >= 2, got {len(a)} and {len(p)}")

    std_a, std_p = a.std(), p.std()
    if std_a == 0 or std_p == 0:
        overwatch.warning("Pearson correlation of a constant vector is undefined; reporting 0")
        return 0.0
    covariance = float(np.mean((a - a.mean()) * (p - p.mean())))
    return float(np.clip(covariance / (std_a * std_p), -1.0, 1.0))


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the smallest value with at least q% of the data at or below it."""
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return float(ordered[rank - 1])
