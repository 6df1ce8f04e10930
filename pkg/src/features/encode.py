"""
encode.py

Encode operators as fixed-width vectors (one-hot operator/table/index sections, numeric estimates, snapshot slots) and
whole plans as post-order node matrices ready for the cost models.
"""
import functools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.plans.ingest import PlanNode, PlanTree, extract_labeled_operators, plan_label
from src.snapshot.fit import FeatureSnapshot
from src.snapshot.formulas import FORMULAS, SNAPSHOT_SLOTS
from src.util.errors import MissingOperatorSnapshot, SchemaMismatch

from .schema import EXTRA_PREFIX, FeatureSchema


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.features.encode")

FALLBACK_ZEROS = "zeros"


@dataclass(eq=False)
class FeatureVector:
    values: np.ndarray
    schema_hash: str


@dataclass(eq=False)
class EncodedPlan:
    """
    A plan ready for the cost models: node vectors in post-order (children before parents, root last), each node's
    child positions, and the labels the trainer may supervise.
    """

    vectors: np.ndarray
    tags: List[str]
    children: List[List[int]]
    schema_hash: str
    label: Optional[float] = None
    node_totals: Optional[np.ndarray] = None
    own_costs: Optional[np.ndarray] = None
    env_id: str = ""
    query_id: str = ""
    type_vocab: Tuple[str, ...] = ()

    @property
    def root(self) -> int:
        return len(self.tags) - 1

    @property
    def heights(self) -> List[int]:
        heights: List[int] = []
        for kids in self.children:
            heights.append(1 + max(heights[k] for k in kids) if kids else 0)
        return heights


@functools.lru_cache(maxsize=None)
def _warn_oov(section: str, value: str) -> None:
    overwatch.warning(f"Out-of-vocabulary {section} `{value}` encoded as an all-zero one-hot section")


def _one_hot(values: np.ndarray, section: slice, vocab, value: Optional[str], name: str) -> None:
    if value is None:
        return
    if value in vocab:
        values[section.start + vocab.index(value)] = 1.0
    else:
        _warn_oov(name, value)


def encode_operator(node: PlanNode, schema: FeatureSchema) -> FeatureVector:
    """
    Encode one operator. Snapshot slots are left at zero (see `apply_snapshot`); masked dimensions are zeroed.

    :param node: Plan node to encode.
    :param schema: Encoding contract.

    :return: FeatureVector bound to `schema`.
    """
    values = np.zeros(schema.dim, dtype=np.float64)
    sections = schema.sections
    _one_hot(values, sections["node_type"], schema.node_types, node.node_type, "operator")
    _one_hot(values, sections["table"], schema.tables, node.relation, "table")
    _one_hot(values, sections["index"], schema.indexes, node.index, "index")

    child_rows = [math.log1p(child.est_rows) for child in node.children[:2]]
    child_rows += [0.0] * (2 - len(child_rows))
    numeric = {
        "est_rows_log": math.log1p(node.est_rows),
        "est_width": node.est_width,
        "est_startup_cost": node.est_startup_cost,
        "est_total_cost": node.est_total_cost,
        "child1_rows_log": child_rows[0],
        "child2_rows_log": child_rows[1],
    }
    start = sections["numeric"].start
    for offset, name in enumerate(schema.numeric_dims):
        if name.startswith(EXTRA_PREFIX):
            values[start + offset] = node.extras.get(name[len(EXTRA_PREFIX) :], 0.0)
        else:
            values[start + offset] = numeric[name]

    return FeatureVector(values * schema.mask_array, schema.hash)


def mask_vector(vec: FeatureVector, schema: FeatureSchema) -> FeatureVector:
    schema.check(vec.schema_hash, "feature vector")
    return FeatureVector(vec.values * schema.mask_array, vec.schema_hash)


def snapshot_values(
    snap: Optional[FeatureSnapshot], node_type: str, schema: FeatureSchema, fallback: Optional[str] = None
) -> np.ndarray:
    """Standardized snapshot slots for one operator type (zero padded to the slot count)."""
    coefficients = snap.coefficients.get(node_type) if snap is not None else None
    if coefficients is None:
        # Operators without a logical formula never have coefficients
        if fallback == FALLBACK_ZEROS or node_type not in FORMULAS:
            return np.zeros(SNAPSHOT_SLOTS)
        env = snap.env_id if snap is not None else "<none>"
        raise MissingOperatorSnapshot(f"snapshot for environment `{env}` has no coefficients for `{node_type}`")

    raw = np.zeros(SNAPSHOT_SLOTS)
    raw[: len(coefficients)] = coefficients
    mean, std = schema.snapshot_stats(node_type)
    return (raw - mean) / std


def apply_snapshot(
    vec: FeatureVector,
    snap: Optional[FeatureSnapshot],
    node_type: str,
    schema: FeatureSchema,
    fallback: Optional[str] = None,
) -> FeatureVector:
    """
    Fill the snapshot slots of an encoded operator with its environment's (standardized) formula coefficients.

    :param vec: Encoded operator.
    :param snap: Environment snapshot.
    :param node_type: Operator tag selecting the coefficients.
    :param schema: Schema `vec` is bound to.
    :param fallback: "zeros" to encode types missing from the snapshot as zeros instead of failing.

    :return: New FeatureVector; every non-snapshot dimension is unchanged.
    """
    schema.check(vec.schema_hash, "feature vector")
    if not schema.snapshot_dims:
        raise SchemaMismatch("schema has no snapshot dimensions; rebuild it with snapshots")

    values = vec.values.copy()
    section = schema.sections["snapshot"]
    values[section] = snapshot_values(snap, node_type, schema, fallback) * schema.mask_array[section]
    return FeatureVector(values, vec.schema_hash)


def encode_plan(
    tree: PlanTree,
    schema: FeatureSchema,
    snapshot: Optional[FeatureSnapshot] = None,
    fallback: Optional[str] = None,
) -> EncodedPlan:
    """
    Encode every node of a plan (post-order). When the schema has snapshot dims, `snapshot` must be the plan's
    environment snapshot (or `fallback="zeros"` given).
    """
    nodes = tree.nodes()
    position = {id(node): i for i, node in enumerate(nodes)}

    vectors = np.zeros((len(nodes), schema.dim), dtype=np.float64)
    for i, node in enumerate(nodes):
        vec = encode_operator(node, schema)
        if schema.snapshot_dims:
            vec = apply_snapshot(vec, snapshot, node.node_type, schema, fallback)
        vectors[i] = vec.values

    label, node_totals, own_costs = None, None, None
    if all(node.has_actuals for node in nodes):
        label = plan_label(tree)
        node_totals = np.asarray([node.subtree_time for node in nodes], dtype=np.float64)
        own_costs = np.asarray([op.own_cost_ms for op in extract_labeled_operators(tree)], dtype=np.float64)
    elif tree.total_time_ms is not None:
        label = tree.total_time_ms

    return EncodedPlan(
        vectors=vectors,
        tags=[node.node_type for node in nodes],
        children=[[position[id(child)] for child in node.children] for node in nodes],
        schema_hash=schema.hash,
        label=label,
        node_totals=node_totals,
        own_costs=own_costs,
        env_id=tree.env_id,
        query_id=tree.query_id,
        type_vocab=tuple(schema.node_types),
    )


def encode_workload(
    trees: List[PlanTree],
    schema: FeatureSchema,
    snapshots: Optional[dict] = None,
    fallback: Optional[str] = None,
) -> List[EncodedPlan]:
    """Encode many plans, each with the snapshot of its own environment."""
    snapshots = snapshots or {}
    return [encode_plan(tree, schema, snapshots.get(tree.env_id), fallback) for tree in trees]
