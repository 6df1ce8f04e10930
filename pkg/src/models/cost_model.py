"""
cost_model.py

Two reference learned cost estimators over encoded operators, both predicting log(1 + cost):

    - `flat`            :: operator vectors of a plan are mean-pooled and passed through one MLP (set-style model).
    - `plan_structured` :: one MLP unit per operator tag; a node's unit maps [node features, sum of its children's
                           hidden outputs] to [cost scalar, hidden vector of width h]; the root's cost scalar is the
                           plan prediction (plan-structured model).

Also handles prediction, operator-level scoring, and the portable JSON weight document.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from src.features.encode import EncodedPlan, FeatureVector
from src.util.errors import DataError, SchemaMismatch, ShapeMismatch, UnknownOperator, VersionMismatch

from .units import ACTIVATIONS, MLPUnit


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.models.cost_model")

WEIGHTS_VERSION = 1
FLAT, PLAN_STRUCTURED = "flat", "plan_structured"
FLAT_UNIT = "flat"

# Predictions never go below this many milliseconds
MIN_PREDICTION_MS = 1e-6


@dataclass
class PlanGroup:
    """Nodes of one (height, tag) bucket; processed together since all their children are already computed."""

    tag: str
    index: torch.Tensor
    parent_index: torch.Tensor
    has_parent: torch.Tensor


@dataclass
class PlanBatch:
    x: torch.Tensor
    groups: List[PlanGroup]
    roots: torch.Tensor
    n_nodes: int


class CostModel(nn.Module):
    def __init__(
        self,
        kind: str,
        schema_hash: str,
        input_dim: int,
        hidden_sizes: Sequence[int],
        node_types: Sequence[str] = (),
        hidden_width: int = 0,
        type_vocab: Sequence[str] = (),
    ) -> None:
        super().__init__()
        if kind not in (FLAT, PLAN_STRUCTURED):
            raise DataError(f"unknown cost model kind `{kind}`")
        self.kind, self.schema_hash, self.input_dim = kind, schema_hash, input_dim
        self.hidden_width = hidden_width if kind == PLAN_STRUCTURED else 0
        self.meta: Dict[str, Any] = {}

        # Operator vocabulary of the schema's one-hot type section (may list types that have no unit)
        self.type_vocab: Tuple[str, ...] = tuple(type_vocab)

        self.units = nn.ModuleDict()
        if kind == FLAT:
            self.units[FLAT_UNIT] = MLPUnit([input_dim, *hidden_sizes, 1])
        else:
            for tag in node_types:
                self.units[tag] = MLPUnit([input_dim + hidden_width, *hidden_sizes, 1 + hidden_width])

        # Input standardization (fitted at training time) and the schema's active mask
        self.register_buffer("input_mean", torch.zeros(input_dim, dtype=torch.float64))
        self.register_buffer("input_std", torch.ones(input_dim, dtype=torch.float64))
        self.register_buffer("input_mask", torch.ones(input_dim, dtype=torch.float64))

    @property
    def node_types(self) -> List[str]:
        return [tag for tag in self.units if tag != FLAT_UNIT] if self.kind == PLAN_STRUCTURED else []

    def unit(self, tag: Optional[str] = None) -> MLPUnit:
        if self.kind == FLAT:
            return self.units[FLAT_UNIT]
        if tag not in self.units:
            raise SchemaMismatch(f"plan-structured model has no unit for operator `{tag}`")
        return self.units[tag]

    def normalize(self, x: torch.Tensor) -> torch.Tensor:
        return (x * self.input_mask - self.input_mean) / self.input_std

    # Forward Passes (all return raw, log-space outputs)
    def forward_pooled(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.unit()(self.normalize(pooled))[:, 0]

    def forward_operators(self, x: torch.Tensor, tag: Optional[str] = None) -> torch.Tensor:
        """Operator-level scoring; plan-structured units see a zero child-hidden input."""
        inputs = self.normalize(x)
        if self.kind == PLAN_STRUCTURED:
            inputs = torch.cat([inputs, torch.zeros(len(x), self.hidden_width, dtype=x.dtype)], dim=1)
        return self.unit(tag)(inputs)[:, 0]

    def forward_plans(self, batch: PlanBatch) -> torch.Tensor:
        """Cost scalar of every node in the batch (post-order per plan)."""
        x = self.normalize(batch.x)
        costs = torch.zeros(batch.n_nodes, dtype=x.dtype)
        child_sum = torch.zeros(batch.n_nodes, self.hidden_width, dtype=x.dtype)
        for group in batch.groups:
            out = self.unit(group.tag)(torch.cat([x[group.index], child_sum[group.index]], dim=1))
            costs = costs.index_copy(0, group.index, out[:, 0])
            if len(group.parent_index):
                child_sum = child_sum.index_add(0, group.parent_index, out[group.has_parent, 1:])
        return costs


# === Batching ===


def pool_plans(plans: Sequence[EncodedPlan]) -> np.ndarray:
    """Mean-pooled operator vectors, one row per plan."""
    return np.stack([plan.vectors.mean(axis=0) for plan in plans])


def collate_plans(plans: Sequence[EncodedPlan]) -> PlanBatch:
    vectors, tags, parents, heights, roots = [], [], [], [], []
    offset = 0
    for plan in plans:
        parent = [-1] * len(plan.tags)
        for node, kids in enumerate(plan.children):
            for kid in kids:
                parent[kid] = offset + node
        vectors.append(plan.vectors)
        tags.extend(plan.tags)
        parents.extend(parent)
        heights.extend(plan.heights)
        roots.append(offset + plan.root)
        offset += len(plan.tags)

    buckets: Dict[Tuple[int, str], List[int]] = {}
    for node, key in enumerate(zip(heights, tags)):
        buckets.setdefault(key, []).append(node)

    groups = []
    for height, tag in sorted(buckets):
        index = buckets[(height, tag)]
        has_parent = [parents[i] >= 0 for i in index]
        groups.append(
            PlanGroup(
                tag=tag,
                index=torch.tensor(index, dtype=torch.long),
                parent_index=torch.tensor([parents[i] for i in index if parents[i] >= 0], dtype=torch.long),
                has_parent=torch.tensor(has_parent, dtype=torch.bool),
            )
        )
    return PlanBatch(
        x=torch.from_numpy(np.concatenate(vectors)),
        groups=groups,
        roots=torch.tensor(roots, dtype=torch.long),
        n_nodes=offset,
    )


# === Prediction ===


def _to_cost(raw: torch.Tensor) -> np.ndarray:
    return np.maximum(np.expm1(raw.detach().numpy()), MIN_PREDICTION_MS)


def raw_plan_outputs(model: CostModel, plans: Sequence[EncodedPlan]) -> torch.Tensor:
    for plan in plans:
        if plan.schema_hash != model.schema_hash:
            raise SchemaMismatch(
                f"plan {plan.query_id!r} is bound to schema {plan.schema_hash}, model to {model.schema_hash}"
            )
    if model.kind == FLAT:
        return model.forward_pooled(torch.from_numpy(pool_plans(plans)))
    batch = collate_plans(plans)
    return model.forward_plans(batch)[batch.roots]


def predict_batch(model: CostModel, plans: Sequence[EncodedPlan]) -> np.ndarray:
    """Predicted cost (ms) for each plan."""
    with torch.no_grad():
        return _to_cost(raw_plan_outputs(model, plans))


def predict(model: CostModel, plan: EncodedPlan) -> float:
    """
    Predicted execution cost of one plan: expm1 of the network output, clamped to >= 1e-6 ms.

    :param model: Trained cost model.
    :param plan: Plan encoded under the model's schema.

    :return: Cost in milliseconds.
    """
    return float(predict_batch(model, [plan])[0])


def infer_tag(model: CostModel, values: np.ndarray) -> str:
    """Operator tag from the one-hot type section (the first section of every schema), via the schema vocabulary."""
    vocab = model.type_vocab
    if not vocab:
        raise SchemaMismatch("model carries no operator vocabulary; pass the operator tag explicitly")
    section = values[: len(vocab)]
    if section.max(initial=0.0) != 1.0:
        raise SchemaMismatch("cannot infer the operator of a vector whose type section is empty or masked")
    tag = vocab[int(section.argmax())]
    if tag not in model.units:
        raise UnknownOperator(f"operator `{tag}` has no unit in this plan-structured model")
    return tag


def raw_operator_outputs(model: CostModel, x: np.ndarray, tag: Optional[str] = None) -> np.ndarray:
    """Raw (log-space) network output for a matrix of operator vectors of one tag."""
    with torch.no_grad():
        return model.forward_operators(torch.from_numpy(np.atleast_2d(x)), tag).numpy()


def predict_operator(model: CostModel, op_vector: FeatureVector, tag: Optional[str] = None) -> float:
    """
    Operator-level cost estimate, with the same transform/clamp as `predict`. Plan-structured models score the vector
    with the unit of `tag` (inferred from the type section when omitted).
    """
    if op_vector.schema_hash != model.schema_hash:
        raise SchemaMismatch(f"vector is bound to schema {op_vector.schema_hash}, model to {model.schema_hash}")
    if model.kind == PLAN_STRUCTURED and tag is None:
        tag = infer_tag(model, op_vector.values)
    raw = raw_operator_outputs(model, op_vector.values, tag)
    return float(max(np.expm1(raw[0]), MIN_PREDICTION_MS))


# === Operator Networks ===


def operator_layers(model: CostModel, tag: Optional[str] = None) -> List[Tuple[np.ndarray, np.ndarray, str]]:
    """
    The operator-level network as plain (W, b, activation) layers over raw encoded vectors: input masking and
    standardization are folded into the first layer, child-hidden inputs dropped, and the last layer restricted to
    the cost output.
    """
    unit = model.unit(tag)
    scale = (model.input_mask / model.input_std).numpy()
    shift = (model.input_mean / model.input_std).numpy()

    layers = []
    for i, (layer, act) in enumerate(zip(unit.layers, unit.activations)):
        weight, bias = layer.weight.detach().numpy().copy(), layer.bias.detach().numpy().copy()
        if i == 0:
            weight = weight[:, : model.input_dim]
            bias = bias - weight @ shift
            weight = weight * scale
        if i == len(unit.layers) - 1:
            weight, bias = weight[:1], bias[:1]
        layers.append((weight, bias, act))
    return layers


# === Weight Documents ===


def export_weights(model: CostModel) -> Dict[str, Any]:
    units = {}
    for tag, unit in model.units.items():
        units[tag] = {
            "layers": [
                {"w": layer.weight.detach().tolist(), "b": layer.bias.detach().tolist(), "act": act}
                for layer, act in zip(unit.layers, unit.activations)
            ]
        }
    return {
        "version": WEIGHTS_VERSION,
        "kind": model.kind,
        "schema_hash": model.schema_hash,
        "hidden_width": model.hidden_width,
        "type_vocab": list(model.type_vocab),
        "units": units,
        "input_norm": {"mean": model.input_mean.tolist(), "std": model.input_std.tolist()},
        "input_mask": model.input_mask.tolist(),
        "meta": model.meta,
    }


def _check_matrix(w: Any, where: str) -> Tuple[int, int]:
    if not isinstance(w, list) or not w or not all(isinstance(row, list) for row in w):
        raise ShapeMismatch(f"{where}: weight must be a non-empty list of rows")
    cols = len(w[0])
    if cols == 0 or any(len(row) != cols for row in w):
        raise ShapeMismatch(f"{where}: weight rows have unequal lengths (truncated matrix?)")
    return len(w), cols


def _check_unit(tag: str, layers: List[Dict[str, Any]]) -> List[int]:
    if not layers:
        raise ShapeMismatch(f"unit `{tag}` has no layers")
    sizes: List[int] = []
    for i, layer in enumerate(layers):
        where = f"unit `{tag}` layer {i}"
        rows, cols = _check_matrix(layer.get("w"), where)
        if len(layer.get("b", [])) != rows:
            raise ShapeMismatch(f"{where}: bias has {len(layer.get('b', []))} entries for {rows} outputs")
        if sizes and cols != sizes[-1]:
            raise ShapeMismatch(f"{where}: expects {cols} inputs but the previous layer emits {sizes[-1]}")
        if layer.get("act") not in ACTIVATIONS:
            raise DataError(f"{where}: activation must be one of {sorted(ACTIVATIONS)}, got {layer.get('act')!r}")
        sizes = sizes or [cols]
        sizes.append(rows)
    return sizes


def import_weights(doc: Dict[str, Any]) -> CostModel:
    """
    Rebuild a CostModel from its weight document. Documents may omit `input_norm` / `input_mask` (identity
    standardization, nothing masked).
    """
    if doc.get("version") != WEIGHTS_VERSION:
        raise VersionMismatch(f"weight document version {doc.get('version')!r}, expected {WEIGHTS_VERSION}")

    kind, hidden_width = doc.get("kind"), int(doc.get("hidden_width", 0))
    units_doc = doc.get("units") or {}
    if not units_doc:
        raise ShapeMismatch("weight document has no units")
    sizes = {tag: _check_unit(tag, unit["layers"]) for tag, unit in units_doc.items()}

    first = next(iter(sizes.values()))
    input_dim = first[0] - (hidden_width if kind == PLAN_STRUCTURED else 0)
    for tag, unit_sizes in sizes.items():
        expected_out = 1 + hidden_width if kind == PLAN_STRUCTURED else 1
        if unit_sizes[0] != first[0] or unit_sizes[-1] != expected_out:
            raise ShapeMismatch(f"unit `{tag}` maps {unit_sizes[0]} -> {unit_sizes[-1]}, inconsistent with the model")

    model = CostModel(
        kind=kind,
        schema_hash=str(doc.get("schema_hash", "")),
        input_dim=input_dim,
        hidden_sizes=[],
        node_types=[],
        hidden_width=hidden_width,
        type_vocab=[str(tag) for tag in doc.get("type_vocab", [])],
    )
    for tag, unit in units_doc.items():
        mlp = MLPUnit(sizes[tag], [layer["act"] for layer in unit["layers"]])
        with torch.no_grad():
            for layer, layer_doc in zip(mlp.layers, unit["layers"]):
                layer.weight.copy_(torch.tensor(layer_doc["w"], dtype=torch.float64))
                layer.bias.copy_(torch.tensor(layer_doc["b"], dtype=torch.float64))
        model.units[tag] = mlp

    norm = doc.get("input_norm") or {}
    for name, values in (
        ("input_mean", norm.get("mean")),
        ("input_std", norm.get("std")),
        ("input_mask", doc.get("input_mask")),
    ):
        if values is None:
            continue
        if len(values) != input_dim:
            raise ShapeMismatch(f"{name} has {len(values)} entries for {input_dim} input dimensions")
        getattr(model, name).copy_(torch.tensor(values, dtype=torch.float64))

    model.meta = dict(doc.get("meta", {}))
    return model


def save_model(model: CostModel, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(export_weights(model), f)


def load_model(path: Union[str, Path]) -> CostModel:
    with open(path, "r", encoding="utf-8") as f:
        return import_weights(json.load(f))
