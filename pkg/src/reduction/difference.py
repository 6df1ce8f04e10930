"""
difference.py

Difference-propagation feature importance. For an operator x in the dataset and a reference operator r, the output
difference f(x) - f(r) is spread back over every connected input -> output path of the operator network; along a path
each edge contributes the ratio of the node differences at its two ends, so a path telescopes to
(f(x) - f(r)) / (x_k - r_k) unless one of its hidden nodes did not change, in which case it contributes nothing.
The score of input k is the mean absolute path sum over all (x, r) pairs with x_k != r_k.

Path sums are never enumerated: counting the live paths from every hidden node to the output is a backward pass with
binary connectivity matrices, which keeps the cost linear in the number of pairs.
"""
import logging
import time
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.models.cost_model import CostModel, operator_layers
from src.models.units import ACTIVATIONS

from .dataset import ReductionDataset, unit_groups
from .report import KEEP_THRESHOLD, ImportanceReport, combine_groups


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.reduction.difference")

Layer = Tuple[np.ndarray, np.ndarray, str]


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if name == "relu" else z


def forward_trace(layers: List[Layer], x: np.ndarray) -> List[np.ndarray]:
    """Activations of every layer, input first; the last entry is the (n, 1) network output."""
    acts = [x]
    for weight, bias, act in layers:
        assert act in ACTIVATIONS, f"Unknown activation `{act}`!"
        acts.append(_activate(act, acts[-1] @ weight.T + bias))
    return acts


def pair_path_sums(
    layers: List[Layer], acts: List[np.ndarray], ref_acts: List[np.ndarray]
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Path sums of every operator in `acts` against the single reference in `ref_acts`.

    :param layers: Operator network as (W, b, act) layers.
    :param acts: `forward_trace` of the dataset rows.
    :param ref_acts: `forward_trace` of one reference row.

    :return: (sums, valid): both (n, F); `sums` is zero where `valid` (x_k != r_k) is False.
    """
    connect = [(weight != 0).astype(np.float64) for weight, _, _ in layers]
    deltas = [a - r for a, r in zip(acts, ref_acts)]

    # Live path counts, output back to the first hidden layer
    live = deltas[-1]
    for depth in range(len(layers) - 1, 0, -1):
        live = (live @ connect[depth]) * (deltas[depth] != 0)
    numerators = live @ connect[0]

    dx = deltas[0]
    valid = dx != 0
    sums = np.divide(numerators, dx, out=np.zeros_like(numerators), where=valid)
    return sums, valid


def group_scores(layers: List[Layer], x: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Mean |path sum| per input over all (row, reference) pairs; inputs that never differ score 0."""
    acts = forward_trace(layers, x)
    ref_trace = forward_trace(layers, reference)

    total, count = np.zeros(x.shape[1]), np.zeros(x.shape[1])
    for j in range(len(reference)):
        sums, valid = pair_path_sums(layers, acts, [a[j : j + 1] for a in ref_trace])
        total += np.abs(sums).sum(axis=0)
        count += valid.sum(axis=0)
    return np.divide(total, count, out=np.zeros_like(total), where=count > 0)


def diff_importance(data: ReductionDataset, model: CostModel, refs: int, seed: int) -> ImportanceReport:
    """
    :param data: Operator-level dataset D (encoded under the model's schema).
    :param model: Trained cost model.
    :param refs: Size of the reference subset R, drawn uniformly without replacement.
    :param seed: Seed for drawing R.

    :return: ImportanceReport; a dimension is kept iff its score exceeds 1e-12.
    """
    start_time = time.perf_counter()
    groups = unit_groups(data, model)
    reference_ids = data.sample_references(refs, seed)
    reference = data.reference
    overwatch.info(f"Scoring {data.x.shape[1]} dimensions over {len(data)} operators x {refs} references")

    per_group: Dict[Optional[str], np.ndarray] = {}
    for tag, index in groups.items():
        per_group[tag] = group_scores(operator_layers(model, tag), data.x[index], reference)

    scores = combine_groups(per_group)
    runtime_ms = (time.perf_counter() - start_time) * 1000.0
    return ImportanceReport(
        method="diff",
        scores=scores.tolist(),
        kept=(scores > KEEP_THRESHOLD).tolist(),
        runtime_ms=runtime_ms,
        reference_ids=list(reference_ids),
        seed=seed,
        group_scores={tag or "flat": s.tolist() for tag, s in per_group.items()},
    )
