"""
ingest.py

Parse executed query plans (EXPLAIN (ANALYZE, FORMAT JSON) output) into plan trees, extract operator-level labeled
records, and read/write the dataset JSONL format that every later stage consumes.
"""
import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import jsonlines

from src.util.errors import DatasetLoadError, MalformedPlan, MissingActuals


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.plans.ingest")

# PostgreSQL "Node Type" strings --> operator tags
NODE_TYPE_TAGS = {
    "Seq Scan": "SeqScan",
    "Index Scan": "IndexScan",
    "Sort": "Sort",
    "Aggregate": "Aggregate",
    "Hash Join": "HashJoin",
    "Merge Join": "MergeJoin",
    "Nested Loop": "NestedLoop",
    "Materialize": "Materialize",
}
KNOWN_TAGS = frozenset(NODE_TYPE_TAGS.values())
JOIN_TAGS = frozenset({"HashJoin", "MergeJoin", "NestedLoop"})
SCAN_TAGS = frozenset({"SeqScan", "IndexScan"})

# Exact JSON keys of a plan node object
KEY_NODE_TYPE, KEY_CHILDREN, KEY_EXTRAS = "Node Type", "Plans", "Extra Features"
NUMERIC_KEYS = {
    "est_rows": "Plan Rows",
    "est_width": "Plan Width",
    "est_startup_cost": "Startup Cost",
    "est_total_cost": "Total Cost",
    "actual_total_time": "Actual Total Time",
    "actual_loops": "Actual Loops",
    "actual_rows": "Actual Rows",
}
ESTIMATE_FIELDS = ("est_rows", "est_width", "est_startup_cost", "est_total_cost")

# Absolute slack (ms) when checking the execution time against the root's measured time
TOTAL_TIME_TOLERANCE = 1e-3


def tag_for(raw_type: str) -> str:
    return NODE_TYPE_TAGS.get(raw_type, f"Other({raw_type})")


def is_other(tag: str) -> bool:
    return tag not in KNOWN_TAGS


@dataclass
class PlanNode:
    node_type: str
    raw_type: str
    est_rows: float = 0.0
    est_width: float = 0.0
    est_startup_cost: float = 0.0
    est_total_cost: float = 0.0
    actual_total_time: Optional[float] = None
    actual_loops: Optional[float] = None
    actual_rows: Optional[float] = None
    relation: Optional[str] = None
    index: Optional[str] = None
    children: List["PlanNode"] = field(default_factory=list)
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def has_actuals(self) -> bool:
        return self.actual_total_time is not None and self.actual_loops is not None

    @property
    def subtree_time(self) -> float:
        """Total time spent in this subtree across all loops (ms)."""
        return self.actual_total_time * self.actual_loops

    def walk(self) -> Iterator["PlanNode"]:
        """Post-order traversal (children before parent, children in stored order)."""
        for child in self.children:
            yield from child.walk()
        yield self


@dataclass
class PlanTree:
    root: PlanNode
    env_id: str = ""
    query_id: str = ""
    total_time_ms: Optional[float] = None
    line_no: Optional[int] = field(default=None, compare=False)

    def nodes(self) -> List[PlanNode]:
        return list(self.root.walk())


@dataclass
class LabeledOperator:
    node_type: str
    input_cards: List[float]
    output_card: Optional[float]
    own_cost_ms: float
    env_id: str
    raw_node: PlanNode = field(repr=False, compare=False)


# === Parsing ===


def _parse_node(obj: Any, position: str) -> PlanNode:
    if not isinstance(obj, dict):
        raise MalformedPlan(f"plan node must be a JSON object, got {type(obj).__name__}", position)
    if KEY_NODE_TYPE not in obj or not isinstance(obj[KEY_NODE_TYPE], str):
        raise MalformedPlan(f'plan node lacks a string "{KEY_NODE_TYPE}"', position)

    raw_type = obj[KEY_NODE_TYPE]
    values: Dict[str, Optional[float]] = {}
    for attr, key in NUMERIC_KEYS.items():
        value = obj.get(key)
        if value is None:
            values[attr] = None
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise MalformedPlan(f'"{key}" must be a finite number, got {value!r}', position)
        values[attr] = float(value)

    for attr in ESTIMATE_FIELDS:
        if values[attr] is None:
            values[attr] = 0.0
    if values["est_rows"] < 0 or values["est_width"] < 0:
        raise MalformedPlan("estimated rows and width must be non-negative", position)
    if values["actual_loops"] is not None and values["actual_loops"] < 1:
        raise MalformedPlan(f'"Actual Loops" must be >= 1, got {values["actual_loops"]}', position)

    extras_obj = obj.get(KEY_EXTRAS, {})
    if not isinstance(extras_obj, dict):
        raise MalformedPlan(f'"{KEY_EXTRAS}" must be an object', position)
    extras = {}
    for name, value in extras_obj.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MalformedPlan(f'extra feature "{name}" must be numeric', position)
        extras[name] = float(value)

    children_obj = obj.get(KEY_CHILDREN, [])
    if not isinstance(children_obj, list):
        raise MalformedPlan(f'"{KEY_CHILDREN}" must be an array', position)
    children = [_parse_node(child, f"{position}.Plans[{i}]") for i, child in enumerate(children_obj)]

    tag = tag_for(raw_type)
    if tag in JOIN_TAGS and len(children) > 2:
        raise MalformedPlan(f"{tag} has {len(children)} children (at most 2 allowed)", position)
    if tag in SCAN_TAGS and children:
        raise MalformedPlan(f"{tag} is a leaf scan but has {len(children)} children", position)

    relation, index = obj.get("Relation Name"), obj.get("Index Name")
    return PlanNode(
        node_type=tag,
        raw_type=raw_type,
        relation=str(relation) if relation is not None else None,
        index=str(index) if index is not None else None,
        children=children,
        extras=extras,
        **values,
    )


def _unwrap(doc: Any) -> Tuple[Any, Optional[float], str]:
    """Accept a FORMAT JSON array, a {"Plan": ...} wrapper, or a bare node; returns (node, execution time, path)."""
    position = "$"
    if isinstance(doc, list):
        if len(doc) != 1:
            raise MalformedPlan(f"expected a single-element EXPLAIN array, got {len(doc)} elements", position)
        doc, position = doc[0], "$[0]"
    if isinstance(doc, dict) and "Plan" in doc:
        execution = doc.get("Execution Time")
        if execution is not None and (isinstance(execution, bool) or not isinstance(execution, (int, float))):
            raise MalformedPlan('"Execution Time" must be numeric', position)
        return doc["Plan"], (float(execution) if execution is not None else None), f"{position}.Plan"
    return doc, None, position


def _check_total_time(tree: PlanTree, position: str) -> None:
    root = tree.root
    if tree.total_time_ms is None or not root.has_actuals:
        return
    if tree.total_time_ms < root.subtree_time - TOTAL_TIME_TOLERANCE * max(1.0, root.subtree_time):
        raise MalformedPlan(
            f"total time {tree.total_time_ms} ms is below the root's measured {root.subtree_time} ms", position
        )


def parse_plan(json_text: str, env_id: str = "", query_id: str = "") -> PlanTree:
    """
    Parse one EXPLAIN (ANALYZE, FORMAT JSON) document into a PlanTree, preserving child order. Unknown node types are
    kept as `Other(<Node Type>)`.

    :param json_text: UTF-8 JSON text of the plan.
    :param env_id: Environment the plan was executed in.
    :param query_id: Identifier of the executed statement.

    :return: Parsed PlanTree.
    """
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise MalformedPlan(f"invalid JSON: {e.msg}", f"line {e.lineno} column {e.colno}") from e

    node_obj, execution_time, position = _unwrap(doc)
    root = _parse_node(node_obj, position)
    tree = PlanTree(root=root, env_id=env_id, query_id=query_id, total_time_ms=execution_time)
    _check_total_time(tree, position)
    return tree


def tree_from_record(record: Any) -> PlanTree:
    """Build a PlanTree from a parsed dataset record {"env_id", "query_id", "plan", "total_time_ms"?}."""
    if not isinstance(record, dict) or "plan" not in record:
        raise MalformedPlan('dataset record must be an object with a "plan" key')
    total = record.get("total_time_ms")
    if total is not None and (isinstance(total, bool) or not isinstance(total, (int, float))):
        raise MalformedPlan('"total_time_ms" must be numeric', "$.total_time_ms")
    tree = PlanTree(
        root=_parse_node(record["plan"], "$.plan"),
        env_id=str(record.get("env_id", "")),
        query_id=str(record.get("query_id", "")),
        total_time_ms=float(total) if total is not None else None,
    )
    _check_total_time(tree, "$.plan")
    return tree


# === Serialization ===


def node_to_object(node: PlanNode) -> Dict[str, Any]:
    obj: Dict[str, Any] = {KEY_NODE_TYPE: node.raw_type}
    for attr, key in NUMERIC_KEYS.items():
        value = getattr(node, attr)
        if value is not None:
            obj[key] = value
    if node.relation is not None:
        obj["Relation Name"] = node.relation
    if node.index is not None:
        obj["Index Name"] = node.index
    if node.extras:
        obj[KEY_EXTRAS] = dict(node.extras)
    if node.children:
        obj[KEY_CHILDREN] = [node_to_object(child) for child in node.children]
    return obj


def plan_to_record(tree: PlanTree) -> Dict[str, Any]:
    record: Dict[str, Any] = {"env_id": tree.env_id, "query_id": tree.query_id, "plan": node_to_object(tree.root)}
    if tree.total_time_ms is not None:
        record["total_time_ms"] = tree.total_time_ms
    return record


def write_dataset(trees: List[PlanTree], path: Union[str, Path]) -> None:
    with jsonlines.open(path, mode="w") as writer:
        writer.write_all(plan_to_record(tree) for tree in trees)


def load_dataset(path: Union[str, Path], skip_invalid: bool = False) -> List[PlanTree]:
    """
    Load a dataset JSONL file in file order; each tree remembers its 1-based line number.

    :param path: Dataset file.
    :param skip_invalid: Drop (and warn about) malformed lines instead of failing.

    :return: List of PlanTrees.
    """
    trees, failures = [], []
    with open(path, "rb") as f:
        for line_no, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                try:
                    record = json.loads(raw.decode("utf-8"))
                except UnicodeDecodeError as e:
                    raise MalformedPlan(f"invalid UTF-8: {e.reason}", f"byte {e.start}", line=line_no) from e
                except json.JSONDecodeError as e:
                    raise MalformedPlan(f"invalid JSON: {e.msg}", f"column {e.colno}", line=line_no) from e
                tree = tree_from_record(record)
            except MalformedPlan as e:
                failures.append((line_no, str(e)))
                continue
            tree.line_no = line_no
            trees.append(tree)

    if failures:
        if not skip_invalid:
            raise DatasetLoadError(str(path), failures)
        for line_no, message in failures:
            overwatch.warning(f"Skipping {path}:{line_no} :: {message}")
    return trees


def ingest_directory(plans_dir: Union[str, Path], env_id: str) -> List[PlanTree]:
    """Parse every `*.json` plan file in `plans_dir` (name order); the file stem becomes the query id."""
    trees = []
    for plan_file in sorted(Path(plans_dir).glob("*.json")):
        try:
            text = plan_file.read_bytes().decode("utf-8")
            trees.append(parse_plan(text, env_id=env_id, query_id=plan_file.stem))
        except UnicodeDecodeError as e:
            raise MalformedPlan(f"{plan_file}: invalid UTF-8: {e.reason}", f"byte {e.start}") from e
        except MalformedPlan as e:
            raise MalformedPlan(f"{plan_file}: {e}", e.position) from e
    return trees


# === Labels ===


def extract_labeled_operators(tree: PlanTree) -> List[LabeledOperator]:
    """
    One LabeledOperator per node (post-order). Own cost is the node's subtree time minus its children's subtree
    times, clamped at 0 to absorb timing jitter.
    """
    records = []
    for node in tree.root.walk():
        if not node.has_actuals or any(not child.has_actuals for child in node.children):
            raise MissingActuals(f"query {tree.query_id!r}: {node.raw_type} node lacks runtime statistics")
        own = node.subtree_time - sum(child.subtree_time for child in node.children)
        records.append(
            LabeledOperator(
                node_type=node.node_type,
                input_cards=[child.actual_rows for child in node.children],
                output_card=node.actual_rows,
                own_cost_ms=max(own, 0.0),
                env_id=tree.env_id,
                raw_node=node,
            )
        )
    return records


def plan_label(tree: PlanTree) -> float:
    """Cost label of a plan: the root's measured subtree time, or the recorded execution time without actuals."""
    if tree.root.has_actuals:
        return tree.root.subtree_time
    if tree.total_time_ms is not None:
        return tree.total_time_ms
    raise MissingActuals(f"query {tree.query_id!r} has neither root actuals nor a total time")


def split_dataset(trees: List[PlanTree], test_fraction: float = 0.2, seed: int = 42) -> Tuple[List, List]:
    """Seeded train/test split; returns (train, test), each in original order."""
    order = list(range(len(trees)))
    random.Random(seed).shuffle(order)
    n_test = int(round(test_fraction * len(trees)))
    test_ids = set(order[:n_test])
    train = [t for i, t in enumerate(trees) if i not in test_ids]
    test = [t for i, t in enumerate(trees) if i in test_ids]
    return train, test
