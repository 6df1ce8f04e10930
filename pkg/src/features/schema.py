"""
schema.py

The encoding contract: one-hot vocabularies (operator tag, table, index), named numeric dimensions, the snapshot
section, and the active mask. A schema is immutable; reductions produce a new schema with a new hash.
"""
import dataclasses
import functools
import hashlib
import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from src.plans.ingest import PlanTree
from src.snapshot.fit import FeatureSnapshot
from src.snapshot.formulas import SNAPSHOT_SLOTS
from src.util.errors import EmptyWorkload, SchemaMismatch


BASE_NUMERIC_DIMS = (
    "est_rows_log",
    "est_width",
    "est_startup_cost",
    "est_total_cost",
    "child1_rows_log",
    "child2_rows_log",
)
SNAPSHOT_DIMS = tuple(f"snapshot.c{slot}" for slot in range(SNAPSHOT_SLOTS))
EXTRA_PREFIX = "extra:"


@dataclasses.dataclass(frozen=True)
class FeatureSchema:
    node_types: Tuple[str, ...]
    tables: Tuple[str, ...]
    indexes: Tuple[str, ...]
    numeric_dims: Tuple[str, ...]
    snapshot_dims: Tuple[str, ...]
    active_mask: Tuple[bool, ...]
    snapshot_mean: Tuple[float, ...] = ()
    snapshot_std: Tuple[float, ...] = ()
    provenance: Tuple[str, ...] = ()

    # Section Offsets
    @functools.cached_property
    def sections(self) -> Dict[str, slice]:
        bounds, start = {}, 0
        for name, width in (
            ("node_type", len(self.node_types)),
            ("table", len(self.tables)),
            ("index", len(self.indexes)),
            ("numeric", len(self.numeric_dims)),
            ("snapshot", len(self.snapshot_dims)),
        ):
            bounds[name] = slice(start, start + width)
            start += width
        return bounds

    @property
    def dim(self) -> int:
        return (
            len(self.node_types)
            + len(self.tables)
            + len(self.indexes)
            + len(self.numeric_dims)
            + len(self.snapshot_dims)
        )

    @property
    def dim_names(self) -> List[str]:
        return (
            [f"type:{t}" for t in self.node_types]
            + [f"table:{t}" for t in self.tables]
            + [f"index:{i}" for i in self.indexes]
            + list(self.numeric_dims)
            + list(self.snapshot_dims)
        )

    @property
    def extra_dims(self) -> List[str]:
        """Numeric dims read from a node's `Extra Features` (named `extra:<name>`)."""
        return [name for name in self.numeric_dims if name.startswith(EXTRA_PREFIX)]

    @functools.cached_property
    def mask_array(self) -> np.ndarray:
        return np.asarray(self.active_mask, dtype=np.float64)

    @functools.cached_property
    def hash(self) -> str:
        """Stable identifier over the dimension layout and the active mask (normalization stats excluded)."""
        layout = {
            "node_types": self.node_types,
            "tables": self.tables,
            "indexes": self.indexes,
            "numeric_dims": self.numeric_dims,
            "snapshot_dims": self.snapshot_dims,
            "active_mask": self.active_mask,
        }
        return hashlib.sha256(json.dumps(layout, sort_keys=True).encode("utf-8")).hexdigest()[:16]

    def snapshot_stats(self, node_type: str) -> Tuple[np.ndarray, np.ndarray]:
        """Per-slot (mean, std) for one operator type; raw (0, 1) for types outside the vocabulary."""
        if node_type not in self.node_types or not self.snapshot_mean:
            return np.zeros(SNAPSHOT_SLOTS), np.ones(SNAPSHOT_SLOTS)
        offset = self.node_types.index(node_type) * SNAPSHOT_SLOTS
        return (
            np.asarray(self.snapshot_mean[offset : offset + SNAPSHOT_SLOTS]),
            np.asarray(self.snapshot_std[offset : offset + SNAPSHOT_SLOTS]),
        )

    def with_mask(self, mask: List[bool], note: str) -> "FeatureSchema":
        active_mask = tuple(bool(m) for m in mask)
        return dataclasses.replace(self, active_mask=active_mask, provenance=self.provenance + (note,))

    def check(self, schema_hash: str, what: str = "input") -> None:
        if schema_hash != self.hash:
            raise SchemaMismatch(f"{what} is bound to schema {schema_hash}, expected {self.hash}")

    # Serialization
    def to_dict(self) -> Dict:
        return {
            "node_types": list(self.node_types),
            "tables": list(self.tables),
            "indexes": list(self.indexes),
            "numeric_dims": list(self.numeric_dims),
            "extra_dims": self.extra_dims,
            "snapshot_dims": list(self.snapshot_dims),
            "active_mask": list(self.active_mask),
            "snapshot_norm": {"mean": list(self.snapshot_mean), "std": list(self.snapshot_std)},
            "provenance": list(self.provenance),
            "hash": self.hash,
        }

    @classmethod
    def from_dict(cls, doc: Dict) -> "FeatureSchema":
        norm = doc.get("snapshot_norm", {})
        schema = cls(
            node_types=tuple(doc["node_types"]),
            tables=tuple(doc["tables"]),
            indexes=tuple(doc["indexes"]),
            numeric_dims=tuple(doc["numeric_dims"]),
            snapshot_dims=tuple(doc["snapshot_dims"]),
            active_mask=tuple(bool(m) for m in doc["active_mask"]),
            snapshot_mean=tuple(float(v) for v in norm.get("mean", [])),
            snapshot_std=tuple(float(v) for v in norm.get("std", [])),
            provenance=tuple(doc.get("provenance", [])),
        )
        if len(schema.active_mask) != schema.dim:
            raise SchemaMismatch(f"active_mask has {len(schema.active_mask)} entries for {schema.dim} dimensions")
        if "hash" in doc and doc["hash"] != schema.hash:
            raise SchemaMismatch(f"schema document hash {doc['hash']} does not match its contents ({schema.hash})")
        return schema


def _snapshot_norm(
    node_types: Tuple[str, ...], snapshots: Dict[str, FeatureSnapshot]
) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    mean, std = [], []
    for node_type in node_types:
        rows = []
        for env_id in sorted(snapshots):
            coefficients = snapshots[env_id].coefficients.get(node_type)
            if coefficients is not None:
                rows.append(list(coefficients) + [0.0] * (SNAPSHOT_SLOTS - len(coefficients)))

        # Single-environment training leaves snapshot values raw
        if len(rows) < 2:
            mean.extend([0.0] * SNAPSHOT_SLOTS)
            std.extend([1.0] * SNAPSHOT_SLOTS)
            continue

        values = np.asarray(rows, dtype=np.float64)
        slot_std = values.std(axis=0)
        slot_std[slot_std == 0.0] = 1.0
        mean.extend(values.mean(axis=0).tolist())
        std.extend(slot_std.tolist())
    return tuple(mean), tuple(std)


def build_schema(trees: List[PlanTree], snapshots: Optional[Dict[str, FeatureSnapshot]] = None) -> FeatureSchema:
    """
    Collect vocabularies from a workload, in lexicographic order.

    :param trees: Workload plans.
    :param snapshots: Environment snapshots seen at training time; when given, the schema carries a snapshot section
                      whose z-score statistics are computed across these environments.

    :return: Fresh FeatureSchema with an all-true active mask.
    """
    if not trees:
        raise EmptyWorkload("cannot build a feature schema from an empty workload")

    node_types, tables, indexes, extras = set(), set(), set(), set()
    for tree in trees:
        for node in tree.root.walk():
            node_types.add(node.node_type)
            if node.relation is not None:
                tables.add(node.relation)
            if node.index is not None:
                indexes.add(node.index)
            extras.update(node.extras)

    vocab = tuple(sorted(node_types))
    snapshot_dims = SNAPSHOT_DIMS if snapshots else ()
    mean, std = _snapshot_norm(vocab, snapshots) if snapshots else ((), ())
    schema = FeatureSchema(
        node_types=vocab,
        tables=tuple(sorted(tables)),
        indexes=tuple(sorted(indexes)),
        numeric_dims=BASE_NUMERIC_DIMS + tuple(f"{EXTRA_PREFIX}{name}" for name in sorted(extras)),
        snapshot_dims=snapshot_dims,
        active_mask=(),
        snapshot_mean=mean,
        snapshot_std=std,
    )
    return dataclasses.replace(schema, active_mask=(True,) * schema.dim)


def save_schema(schema: FeatureSchema, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(schema.to_dict(), f, indent=2)


def load_schema(path: Union[str, Path]) -> FeatureSchema:
    with open(path, "r", encoding="utf-8") as f:
        return FeatureSchema.from_dict(json.load(f))
