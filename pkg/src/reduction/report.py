"""
report.py

Importance reports shared by the three reduction methods, and the schema update that applies one.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from src.features.schema import FeatureSchema
from src.util.errors import DimensionMismatch


# Scores at or below this are treated as zero
KEEP_THRESHOLD = 1e-12


@dataclass
class ImportanceReport:
    method: str
    scores: List[float]
    kept: List[bool]
    runtime_ms: float
    reference_ids: List[int] = field(default_factory=list)
    seed: Optional[int] = None
    qerror_trace: List[float] = field(default_factory=list)
    group_scores: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def dropped(self) -> List[int]:
        return [k for k, keep in enumerate(self.kept) if not keep]

    def to_dict(self) -> Dict:
        doc = {
            "method": self.method,
            "scores": [float(s) for s in self.scores],
            "kept": [bool(k) for k in self.kept],
            "refs": list(self.reference_ids),
            "seed": self.seed,
            "runtime_ms": self.runtime_ms,
            "group_scores": self.group_scores,
        }
        if self.method == "greedy":
            doc["qerror_trace"] = list(self.qerror_trace)
        return doc

    @classmethod
    def from_dict(cls, doc: Dict) -> "ImportanceReport":
        return cls(
            method=doc["method"],
            scores=list(doc["scores"]),
            kept=[bool(k) for k in doc["kept"]],
            runtime_ms=float(doc.get("runtime_ms", 0.0)),
            reference_ids=list(doc.get("refs", [])),
            seed=doc.get("seed"),
            qerror_trace=list(doc.get("qerror_trace", [])),
            group_scores=dict(doc.get("group_scores", {})),
        )


def combine_groups(group_scores: Dict[Optional[str], np.ndarray]) -> np.ndarray:
    """Union across scoring units: a dimension is as important as its most important use."""
    return np.max(np.stack(list(group_scores.values())), axis=0)


def apply_reduction(schema: FeatureSchema, report: ImportanceReport) -> FeatureSchema:
    """
    :param schema: Schema the report was computed on.
    :param report: Importance report.

    :return: Schema whose mask keeps a dimension only if both the report and the previous mask keep it.
    """
    if len(report.kept) != schema.dim:
        raise DimensionMismatch(f"report covers {len(report.kept)} dimensions, schema has {schema.dim}")

    mask = [bool(keep) and active for keep, active in zip(report.kept, schema.active_mask)]
    names = schema.dim_names
    dropped = [names[k] for k, keep in enumerate(report.kept) if not keep]
    note = f"{report.method} reduction (seed={report.seed}, refs={len(report.reference_ids)}) dropped {dropped}"
    if note in schema.provenance and tuple(mask) == schema.active_mask:
        return schema
    return schema.with_mask(mask, note)


def save_report(report: ImportanceReport, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)


def load_report(path: Union[str, Path]) -> ImportanceReport:
    with open(path, "r", encoding="utf-8") as f:
        return ImportanceReport.from_dict(json.load(f))
