"""
gradient.py

Gradient-based importance baseline: the absolute mean (over the dataset) of the partial derivative of the raw network
output with respect to each input dimension. The raw output is the log(1 + cost) value before expm1 and the
1e-6 ms clamp, not the millisecond cost `predict_operator` returns; difference propagation scores the same output.
"""
import logging
import time
from typing import Dict, Optional

import numpy as np
import torch

from src.models.cost_model import CostModel

from .dataset import ReductionDataset, unit_groups
from .report import KEEP_THRESHOLD, ImportanceReport, combine_groups


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.reduction.gradient")


def input_gradients(model: CostModel, x: np.ndarray, tag: Optional[str] = None) -> np.ndarray:
    """d(raw output)/d(input) for each row of `x`."""
    inputs = torch.from_numpy(np.atleast_2d(x)).clone().requires_grad_(True)
    (grads,) = torch.autograd.grad(model.forward_operators(inputs, tag).sum(), inputs)
    return grads.detach().numpy()


def gradient_importance(data: ReductionDataset, model: CostModel) -> ImportanceReport:
    start_time = time.perf_counter()
    per_group: Dict[Optional[str], np.ndarray] = {}
    for tag, index in unit_groups(data, model).items():
        per_group[tag] = np.abs(input_gradients(model, data.x[index], tag).mean(axis=0))

    scores = combine_groups(per_group)
    overwatch.info(f"Gradient importance over {len(data)} operators: {int((scores > KEEP_THRESHOLD).sum())} kept")
    return ImportanceReport(
        method="grad",
        scores=scores.tolist(),
        kept=(scores > KEEP_THRESHOLD).tolist(),
        runtime_ms=(time.perf_counter() - start_time) * 1000.0,
        group_scores={tag or "flat": s.tolist() for tag, s in per_group.items()},
    )
