"""
fit.py

Fit per-environment feature snapshots: for each operator type, regress own cost on the type's logical formula basis.
The solver uses ridge-damped normal equations on column-equilibrated basis columns (so the damping is scale free),
followed by a few refinement sweeps that remove the damping bias whenever the design has full column rank.
"""
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from src.plans.ingest import LabeledOperator, PlanTree, extract_labeled_operators
from src.util.errors import NoFittableOperator

from .formulas import FORMULAS, FormulaSpec, design_matrix


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.snapshot.fit")

# Relative ridge damping, and refinement sweeps against the undamped normal equations
RIDGE_LAMBDA = 1e-8
REFINEMENT_STEPS = 3


@dataclass
class FeatureSnapshot:
    env_id: str
    coefficients: Dict[str, List[float]]
    diagnostics: Dict[str, Dict[str, float]] = field(default_factory=dict)
    omitted: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "env_id": self.env_id,
            "operators": {tag: list(map(float, c)) for tag, c in self.coefficients.items()},
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, doc: Dict) -> "FeatureSnapshot":
        return cls(
            env_id=str(doc["env_id"]),
            coefficients={tag: [float(c) for c in coeffs] for tag, coeffs in doc["operators"].items()},
            diagnostics=dict(doc.get("diagnostics", {})),
        )


def solve_least_squares(matrix: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Least-squares coefficients for `matrix @ c ~ target` via damped, refined normal equations."""
    scale = np.linalg.norm(matrix, axis=0)
    scale[scale == 0.0] = 1.0
    equilibrated = matrix / scale

    gram, rhs = equilibrated.T @ equilibrated, equilibrated.T @ target
    damping = RIDGE_LAMBDA * np.trace(gram) / gram.shape[0]
    damped = gram + damping * np.eye(gram.shape[0])

    solution = np.linalg.solve(damped, rhs)
    for _ in range(REFINEMENT_STEPS):
        solution = solution + np.linalg.solve(damped, rhs - gram @ solution)
    return solution / scale


def _diagnostics(matrix: np.ndarray, target: np.ndarray, coefficients: np.ndarray) -> Dict[str, float]:
    residual = target - matrix @ coefficients
    ss_res = float(residual @ residual)
    ss_tot = float(((target - target.mean()) ** 2).sum())
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    return {"n": int(len(target)), "rmse": float(np.sqrt(ss_res / len(target))), "r2": r2}


def fit_operator(ops: List[LabeledOperator], spec: FormulaSpec) -> Tuple[np.ndarray, Dict[str, float]]:
    matrix, target = design_matrix(ops, spec)
    coefficients = solve_least_squares(matrix, target)
    return coefficients, _diagnostics(matrix, target, coefficients)


def fit_snapshot(ops_by_type: Dict[str, List[LabeledOperator]], env_id: str) -> FeatureSnapshot:
    """
    Fit one environment's snapshot.

    :param ops_by_type: Labeled operators grouped by operator tag.
    :param env_id: Environment the operators were measured in.

    :return: FeatureSnapshot; under-determined types are left out and listed in `omitted`.
    """
    snapshot = FeatureSnapshot(env_id=env_id, coefficients=OrderedDict())
    for tag in sorted(ops_by_type):
        ops = ops_by_type[tag]
        if tag not in FORMULAS:
            overwatch.info(f"[{env_id}] No logical formula for `{tag}`; not part of the snapshot")
            continue

        spec = FORMULAS[tag]
        if len(ops) < len(spec.basis):
            overwatch.warning(
                f"[{env_id}] Omitting `{tag}` from the snapshot: {len(ops)} samples for {len(spec.basis)} coefficients"
            )
            snapshot.omitted[tag] = len(ops)
            continue

        coefficients, diagnostics = fit_operator(ops, spec)
        snapshot.coefficients[tag] = coefficients.tolist()
        snapshot.diagnostics[tag] = diagnostics
        overwatch.info(f"[{env_id}] Fitted `{tag}` on {diagnostics['n']} samples (r2 = {diagnostics['r2']:.6f})")

    if not snapshot.coefficients:
        raise NoFittableOperator(f"[{env_id}] no operator type has enough samples to fit a snapshot")
    return snapshot


def group_operators(trees: List[PlanTree]) -> Dict[str, Dict[str, List[LabeledOperator]]]:
    """Labeled operators of all trees, grouped env_id -> tag -> operators (dataset order preserved)."""
    grouped: Dict[str, Dict[str, List[LabeledOperator]]] = OrderedDict()
    for tree in trees:
        for op in extract_labeled_operators(tree):
            grouped.setdefault(op.env_id, OrderedDict()).setdefault(op.node_type, []).append(op)
    return grouped


def fit_snapshots(trees: List[PlanTree]) -> Dict[str, FeatureSnapshot]:
    """One snapshot per environment present in `trees`."""
    return {env_id: fit_snapshot(by_type, env_id) for env_id, by_type in group_operators(trees).items()}


def save_snapshots(snapshots: Dict[str, FeatureSnapshot], path: Union[str, Path]) -> None:
    """A single environment is written as a bare snapshot document; several as {"snapshots": [...]}."""
    docs = [snapshots[env_id].to_dict() for env_id in sorted(snapshots)]
    payload = docs[0] if len(docs) == 1 else {"snapshots": docs}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)


def load_snapshots(path: Union[str, Path]) -> Dict[str, FeatureSnapshot]:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    docs = payload["snapshots"] if "snapshots" in payload else [payload]
    snapshots = [FeatureSnapshot.from_dict(doc) for doc in docs]
    return OrderedDict((snap.env_id, snap) for snap in snapshots)
