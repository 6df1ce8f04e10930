"""
dataset.py

Operator-level reduction dataset: every operator of a workload as (encoded vector, own cost, tag), plus the grouping
of operators by the model unit that scores them.
"""
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.features.encode import EncodedPlan, encode_workload
from src.features.schema import FeatureSchema
from src.models.cost_model import FLAT, CostModel
from src.plans.ingest import PlanTree
from src.util.errors import EmptyReference, MissingActuals, ReferenceOverflow, SchemaMismatch


@dataclass(eq=False)
class ReductionDataset:
    x: np.ndarray
    y: np.ndarray
    tags: List[str]
    schema_hash: str
    reference_ids: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tags)

    @property
    def reference(self) -> np.ndarray:
        return self.x[self.reference_ids]

    def sample_references(self, refs: int, seed: int) -> List[int]:
        """Draw `refs` distinct operator indices uniformly (seeded) and remember them as R."""
        if refs < 1 or len(self) == 0:
            raise EmptyReference(f"need at least one reference operator (refs={refs}, |D|={len(self)})")
        if refs > len(self):
            raise ReferenceOverflow(f"cannot draw {refs} references from {len(self)} operators")
        self.reference_ids = np.random.default_rng(seed).choice(len(self), size=refs, replace=False).tolist()
        return self.reference_ids


def from_encoded(plans: Sequence[EncodedPlan]) -> ReductionDataset:
    if not plans:
        return ReductionDataset(np.zeros((0, 0)), np.zeros(0), [], "")
    for plan in plans:
        if plan.own_costs is None:
            raise MissingActuals(f"query {plan.query_id!r} lacks per-operator actuals")
    return ReductionDataset(
        x=np.concatenate([plan.vectors for plan in plans]),
        y=np.concatenate([plan.own_costs for plan in plans]),
        tags=[tag for plan in plans for tag in plan.tags],
        schema_hash=plans[0].schema_hash,
    )


def build_reduction_dataset(
    trees: List[PlanTree],
    schema: FeatureSchema,
    snapshots: Optional[dict] = None,
    fallback: Optional[str] = None,
) -> ReductionDataset:
    return from_encoded(encode_workload(trees, schema, snapshots, fallback))


def unit_groups(data: ReductionDataset, model: CostModel) -> Dict[Optional[str], np.ndarray]:
    """Operator indices per scoring unit: one group for flat models, one per operator tag otherwise."""
    if data.schema_hash != model.schema_hash:
        raise SchemaMismatch(f"reduction data is bound to schema {data.schema_hash}, model to {model.schema_hash}")
    if model.kind == FLAT:
        return OrderedDict([(None, np.arange(len(data)))])

    groups: Dict[Optional[str], List[int]] = {}
    for i, tag in enumerate(data.tags):
        groups.setdefault(tag, []).append(i)
    return OrderedDict((tag, np.asarray(groups[tag])) for tag in sorted(groups))
