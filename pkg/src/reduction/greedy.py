"""
greedy.py

Greedy backward elimination baseline. Each round ablates every still-active dimension in turn (replacing it with its
dataset mean, or retraining without it) and permanently drops the one whose ablation gives the lowest mean q-error,
as long as that error is strictly below the current one. Dimensions that are constant over the dataset are dropped
before the first round: mean-filling them leaves every input unchanged.
"""
import logging
import time
from typing import Callable, List, Optional

import numpy as np

from src.models.cost_model import MIN_PREDICTION_MS, CostModel, raw_operator_outputs

from .dataset import ReductionDataset, unit_groups
from .report import ImportanceReport


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.reduction.greedy")

# Given the active mask, return a model retrained without the inactive dimensions
RetrainFn = Callable[[np.ndarray], CostModel]


def operator_qerror(model: CostModel, data: ReductionDataset, x: np.ndarray) -> float:
    """Mean q-error of the model's operator-level estimates on rows `x` against the own costs of `data`."""
    predictions = np.zeros(len(data))
    for tag, index in unit_groups(data, model).items():
        raw = raw_operator_outputs(model, x[index], tag)
        predictions[index] = np.maximum(np.expm1(raw), MIN_PREDICTION_MS)
    actual = np.maximum(data.y, MIN_PREDICTION_MS)
    return float(np.mean(np.maximum(predictions / actual, actual / predictions)))


def greedy_reduce(data: ReductionDataset, model: CostModel, retrain: Optional[RetrainFn] = None) -> ImportanceReport:
    """
    :param data: Operator-level dataset D.
    :param model: Trained cost model (used for every evaluation unless `retrain` is given).
    :param retrain: Optional retrain-per-drop hook; each candidate mask is then scored with a freshly trained model
                    on zeroed (rather than mean-filled) inputs.

    :return: ImportanceReport whose `qerror_trace` holds the accepted mean q-error after every drop.
    """
    start_time = time.perf_counter()
    means = data.x.mean(axis=0)
    active = ~np.all(data.x == data.x[:1], axis=0) if len(data) else np.ones(data.x.shape[1], dtype=bool)
    if not active.all():
        overwatch.debug(f"Dropping constant dimensions {np.flatnonzero(~active).tolist()}")

    def evaluate(mask: np.ndarray) -> float:
        if retrain is not None:
            return operator_qerror(retrain(mask), data, data.x * mask)
        return operator_qerror(model, data, np.where(mask, data.x, means))

    current = evaluate(active)
    trace: List[float] = [current]
    last_ablation = np.full(len(active), current)
    while active.any():
        candidates = []
        for k in np.flatnonzero(active):
            trial = active.copy()
            trial[k] = False
            last_ablation[k] = evaluate(trial)
            candidates.append((last_ablation[k], k))

        # Ties go to the lowest index; only a strict improvement is accepted
        error, k = min(candidates)
        if error >= current:
            break
        overwatch.debug(f"Dropping dimension {k} (mean q-error {current:.4f} -> {error:.4f})")
        active[k], current = False, error
        trace.append(current)

    scores = np.where(active, np.maximum(last_ablation - current, 0.0), 0.0)
    overwatch.info(f"Greedy elimination kept {int(active.sum())}/{len(active)} dimensions")
    return ImportanceReport(
        method="greedy",
        scores=scores.tolist(),
        kept=active.tolist(),
        runtime_ms=(time.perf_counter() - start_time) * 1000.0,
        qerror_trace=trace,
    )
