"""
bench.py

Synthetic multi-environment workloads with known operator cost laws. Each environment scales a base set of logical
formula coefficients; plans are sampled from a few tree shapes with log-uniform cardinalities, and every node's own
time is its formula value (optionally perturbed by multiplicative lognormal noise). Injected "dead" attributes never
influence the labels.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from src.features.schema import EXTRA_PREFIX
from src.plans.ingest import NODE_TYPE_TAGS, PlanNode, PlanTree, write_dataset
from src.snapshot.formulas import FORMULAS
from src.util.errors import DataError, InvalidEnvironment


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.synth.bench")

RAW_TYPES = {tag: raw for raw, tag in NODE_TYPE_TAGS.items()}

DEFAULT_COEFFICIENTS: Dict[str, List[float]] = {
    "SeqScan": [0.01, 0.2],
    "IndexScan": [0.02, 0.1],
    "Sort": [0.004, 0.3],
    "Aggregate": [0.005, 0.1],
    "HashJoin": [0.015, 0.5],
    "MergeJoin": [0.012, 0.4],
    "NestedLoop": [1e-6, 0.001, 0.001, 0.2],
    "Materialize": [0.003, 0.05],
}

SHAPES = ("scan", "scan_sort", "join", "join_aggregate")
DEAD_MODES = ("constant", "noise")
MIN_CARD, MAX_CARD = 10.0, 1e5


@dataclass
class SynthEnvironment:
    env_id: str
    true_coefficients: Dict[str, List[float]]
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.noise_sigma < 0:
            raise InvalidEnvironment(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        for node_type, coefficients in self.true_coefficients.items():
            if node_type not in FORMULAS or len(coefficients) != len(FORMULAS[node_type].basis):
                raise InvalidEnvironment(f"`{node_type}` coefficients {coefficients} do not match its formula")
            if not coefficients[0] > 0:
                raise InvalidEnvironment(f"leading `{node_type}` coefficient must be > 0, got {coefficients[0]}")


@dataclass
class SynthTable:
    name: str
    rows: int
    width: int = 100


@dataclass
class SynthWorkloadSpec:
    tables: List[SynthTable]
    n_plans: int = 200
    seed: int = 42
    plan_shapes: Dict[str, float] = field(default_factory=lambda: {shape: 1.0 for shape in SHAPES})
    dead_feature_count: int = 0
    dead_feature_mode: str = "constant"
    noise_sigma: float = 0.0
    environments: List[float] = field(default_factory=lambda: [1.0])
    base_coefficients: Dict[str, List[float]] = field(default_factory=lambda: dict(DEFAULT_COEFFICIENTS))

    def __post_init__(self) -> None:
        if self.n_plans < 1:
            raise DataError(f"n_plans must be >= 1, got {self.n_plans}")
        if not self.tables or any(table.rows < MIN_CARD for table in self.tables):
            raise DataError(f"need at least one table, each with >= {int(MIN_CARD)} rows")
        unknown = set(self.plan_shapes) - set(SHAPES)
        if unknown or not sum(self.plan_shapes.values()) > 0:
            raise DataError(f"plan_shapes must weight {SHAPES} positively, got {self.plan_shapes}")
        if self.dead_feature_mode not in DEAD_MODES:
            raise DataError(f"dead_feature_mode must be one of {DEAD_MODES}, got `{self.dead_feature_mode}`")

    @property
    def dead_dims(self) -> List[str]:
        return [f"{EXTRA_PREFIX}{name}" for name in self.dead_names]

    @property
    def dead_names(self) -> List[str]:
        return [f"dead_{i}" for i in range(self.dead_feature_count)]

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "SynthWorkloadSpec":
        doc = dict(doc)
        doc["tables"] = [SynthTable(**table) for table in doc.get("tables", [])]
        return cls(**doc)


def load_spec(path: Union[str, Path]) -> SynthWorkloadSpec:
    with open(path, "r", encoding="utf-8") as f:
        try:
            return SynthWorkloadSpec.from_dict(json.load(f))
        except (json.JSONDecodeError, TypeError) as e:
            raise DataError(f"{path}: invalid synthetic workload spec ({e})") from e


def gen_environment(base: SynthEnvironment, scale_factor: float) -> SynthEnvironment:
    """Environment whose every coefficient is `scale_factor` times the base's."""
    if not scale_factor > 0:
        raise InvalidEnvironment(f"scale_factor must be > 0, got {scale_factor}")
    return SynthEnvironment(
        env_id=f"{base.env_id}x{scale_factor:g}",
        true_coefficients={t: [c * scale_factor for c in coefs] for t, coefs in base.true_coefficients.items()},
        noise_sigma=base.noise_sigma,
    )


# === Plan Sampling ===


class _PlanBuilder:
    """Builds one plan; all randomness comes from the plan's own generator, in a fixed draw order."""

    def __init__(self, spec: SynthWorkloadSpec, env: SynthEnvironment, rng: np.random.Generator) -> None:
        self.spec, self.env, self.rng = spec, env, rng
        self.base = spec.base_coefficients

    def card(self, high: float = MAX_CARD) -> float:
        high = max(min(high, MAX_CARD), MIN_CARD)
        return float(np.round(10 ** self.rng.uniform(math.log10(MIN_CARD), math.log10(high))))

    def extras(self) -> Dict[str, float]:
        if self.spec.dead_feature_mode == "constant":
            return {name: 1.0 + i for i, name in enumerate(self.spec.dead_names)}
        return {name: float(self.rng.uniform()) for name in self.spec.dead_names}

    def node(self, tag: str, rows: float, children: List[PlanNode], table: Optional[SynthTable] = None) -> PlanNode:
        if tag == "NestedLoop":
            n, n1, n2 = 0.0, children[0].actual_rows, children[1].actual_rows
        else:
            n, n1, n2 = rows, 0.0, 0.0
        spec = FORMULAS[tag]
        own = spec.evaluate(self.env.true_coefficients.get(tag, self.base[tag]), n, n1, n2)
        own *= float(self.rng.lognormal(0.0, self.env.noise_sigma))

        # Planner estimates follow the base cost laws, independent of the environment
        planned = spec.evaluate(self.base[tag], n, n1, n2)
        child_costs = sum(child.est_total_cost for child in children)
        blocking = tag in ("Sort", "Aggregate", "HashJoin", "Materialize")
        return PlanNode(
            node_type=tag,
            raw_type=RAW_TYPES[tag],
            est_rows=rows,
            est_width=float(table.width if table else sum(c.est_width for c in children)),
            est_startup_cost=child_costs if blocking else 0.0,
            est_total_cost=child_costs + planned,
            actual_total_time=own + sum(child.subtree_time for child in children),
            actual_loops=1.0,
            actual_rows=rows,
            relation=table.name if table else None,
            index=f"{table.name}_pkey" if table and tag == "IndexScan" else None,
            children=children,
            extras=self.extras(),
        )

    def scan(self) -> PlanNode:
        table = self.spec.tables[int(self.rng.integers(len(self.spec.tables)))]
        tag = "SeqScan" if self.rng.uniform() < 0.5 else "IndexScan"
        return self.node(tag, self.card(table.rows), [], table)

    def join(self) -> PlanNode:
        tag = ("HashJoin", "MergeJoin", "NestedLoop")[int(self.rng.integers(3))]
        outer, inner = self.scan(), self.scan()
        if tag == "NestedLoop":
            inner = self.node("Materialize", inner.actual_rows, [inner])
        return self.node(tag, self.card(), [outer, inner])

    def build(self, shape: str) -> PlanNode:
        if shape == "scan":
            return self.scan()
        if shape == "scan_sort":
            child = self.scan()
            return self.node("Sort", child.actual_rows, [child])
        if shape == "join":
            return self.join()
        child = self.join()
        return self.node("Aggregate", self.card(child.actual_rows), [child])


def gen_plans(spec: SynthWorkloadSpec, env: SynthEnvironment) -> List[PlanTree]:
    """
    Sample `spec.n_plans` executed plans under `env`. Plan i draws from `default_rng([spec.seed, i])`, so the same
    plan index has the same shape and cardinalities in every environment.

    :param spec: Workload specification.
    :param env: Environment supplying the true coefficients and noise level.

    :return: Plan trees (dataset JSONL compatible).
    """
    shapes = sorted(spec.plan_shapes)
    weights = np.asarray([spec.plan_shapes[s] for s in shapes], dtype=np.float64)
    trees = []
    for i in range(spec.n_plans):
        rng = np.random.default_rng([spec.seed, i])
        shape = shapes[int(rng.choice(len(shapes), p=weights / weights.sum()))]
        root = _PlanBuilder(spec, env, rng).build(shape)
        trees.append(PlanTree(root, env_id=env.env_id, query_id=f"q{i:05d}", total_time_ms=root.subtree_time))
    return trees


def generate_workload(spec: SynthWorkloadSpec) -> Tuple[List[PlanTree], Dict[str, Any]]:
    """All environments of `spec` (one per scale factor), concatenated, plus the ground-truth manifest."""
    base = SynthEnvironment("env", dict(spec.base_coefficients), spec.noise_sigma)
    environments = [gen_environment(base, factor) for factor in spec.environments]

    trees: List[PlanTree] = []
    for env in environments:
        trees.extend(gen_plans(spec, env))
        overwatch.info(f"Generated {spec.n_plans} plans for environment `{env.env_id}`")

    manifest = {
        "env": [env.env_id for env in environments],
        "dead_dims": spec.dead_dims,
        "true_coefficients": {env.env_id: env.true_coefficients for env in environments},
        "noise_sigma": spec.noise_sigma,
        "seed": spec.seed,
    }
    return trees, manifest


def write_workload(
    trees: List[PlanTree], manifest: Dict[str, Any], out: Union[str, Path], manifest_path: Union[str, Path]
) -> None:
    write_dataset(trees, out)
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
