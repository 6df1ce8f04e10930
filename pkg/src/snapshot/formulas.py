"""
formulas.py

Logical cost formulas per operator type. Each formula is a linear combination of basis functions over the operator's
cardinalities (n = output rows for unary operators; n1, n2 = the two input cardinalities for a nested loop); the fitted
coefficients of that combination are the operator's feature snapshot.
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from src.plans.ingest import LabeledOperator
from src.util.errors import MissingCardinality, WrongOperator


# Width of the snapshot section per operator type (the nested loop formula has the most coefficients)
SNAPSHOT_SLOTS = 4

Cardinalities = Tuple[float, float, float]


@dataclass(frozen=True)
class FormulaSpec:
    node_type: str
    basis: Tuple[Callable[[Cardinalities], float], ...]
    basis_names: Tuple[str, ...]
    uses_inputs: bool = False

    @property
    def coefficient_names(self) -> List[str]:
        return [f"c{i}" for i in range(len(self.basis))]

    def evaluate(self, coefficients, n: float = 0.0, n1: float = 0.0, n2: float = 0.0) -> float:
        """Cost predicted by the formula for the given coefficients."""
        return float(sum(c * fn((n, n1, n2)) for c, fn in zip(coefficients, self.basis)))


def _n(cards: Cardinalities) -> float:
    return cards[0]


def _n_log_n(cards: Cardinalities) -> float:
    n = max(cards[0], 2.0)
    return n * math.log2(n)


def _one(cards: Cardinalities) -> float:
    return 1.0


def _linear(node_type: str) -> FormulaSpec:
    return FormulaSpec(node_type, (_n, _one), ("n", "1"))


FORMULAS: Dict[str, FormulaSpec] = {
    "SeqScan": _linear("SeqScan"),
    "IndexScan": _linear("IndexScan"),
    "Materialize": _linear("Materialize"),
    "Aggregate": _linear("Aggregate"),
    "MergeJoin": _linear("MergeJoin"),
    "HashJoin": _linear("HashJoin"),
    "Sort": FormulaSpec("Sort", (_n_log_n, _one), ("n*log2(n)", "1")),
    "NestedLoop": FormulaSpec(
        "NestedLoop",
        (lambda c: c[1] * c[2], lambda c: c[1], lambda c: c[2], _one),
        ("n1*n2", "n1", "n2", "1"),
        uses_inputs=True,
    ),
}


def cardinalities(op: LabeledOperator, spec: FormulaSpec) -> Cardinalities:
    if spec.uses_inputs:
        if len(op.input_cards) != 2 or any(card is None for card in op.input_cards):
            raise MissingCardinality(f"{op.node_type} needs two input cardinalities, got {op.input_cards}")
        return 0.0, float(op.input_cards[0]), float(op.input_cards[1])
    if op.output_card is None:
        raise MissingCardinality(f"{op.node_type} operator has no output cardinality")
    return float(op.output_card), 0.0, 0.0


def design_matrix(ops: List[LabeledOperator], spec: FormulaSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evaluate the formula basis at every operator's cardinalities.

    :param ops: Labeled operators, all of `spec.node_type`.
    :param spec: Formula to evaluate.

    :return: (|ops| x |basis| matrix, own-cost target vector)
    """
    matrix = np.zeros((len(ops), len(spec.basis)), dtype=np.float64)
    target = np.zeros(len(ops), dtype=np.float64)
    for row, op in enumerate(ops):
        if op.node_type != spec.node_type:
            raise WrongOperator(f"{op.node_type} operator passed to the {spec.node_type} formula")
        cards = cardinalities(op, spec)
        matrix[row] = [fn(cards) for fn in spec.basis]
        target[row] = op.own_cost_ms
    return matrix, target
