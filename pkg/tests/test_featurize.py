import math

import numpy as np
import pytest

from src.features import apply_snapshot, build_schema, encode_operator, encode_plan, encode_workload, mask_vector
from src.features.schema import FeatureSchema
from src.snapshot import FeatureSnapshot
from src.util.errors import EmptyWorkload, MissingOperatorSnapshot, SchemaMismatch
from tests import plan_node, plan_tree, run_tests


def workload():
    sort = plan_node(
        "Sort", time=20.0, rows=50, children=[plan_node("Seq Scan", time=10.0, rows=50, relation="b")]
    )
    join = plan_node(
        "Hash Join",
        time=40.0,
        rows=30,
        children=[
            plan_node("Seq Scan", time=5.0, rows=0, relation="a"),
            plan_node("Index Scan", time=7.0, rows=9, relation="b", index="b_pkey"),
        ],
    )
    return [plan_tree(sort, query_id="q0"), plan_tree(join, query_id="q1")]


def test_schema_vocabularies() -> None:
    schema = build_schema(workload())
    assert schema.tables == ("a", "b")
    assert schema.node_types == ("HashJoin", "IndexScan", "SeqScan", "Sort")
    assert schema.indexes == ("b_pkey",)
    assert all(schema.active_mask) and len(schema.active_mask) == schema.dim
    assert schema.snapshot_dims == ()

    scans = build_schema([plan_tree(plan_node("Seq Scan", relation="a"))])
    assert scans.node_types == ("SeqScan",)


def test_schema_hash_is_deterministic() -> None:
    assert build_schema(workload()).hash == build_schema(workload()).hash
    assert FeatureSchema.from_dict(build_schema(workload()).to_dict()).hash == build_schema(workload()).hash


def test_schema_document_lists_extra_dims() -> None:
    tree = plan_tree(plan_node("Seq Scan", relation="a", extras={"pages": 3.0, "dead_0": 1.0}))
    doc = build_schema([tree]).to_dict()
    assert doc["extra_dims"] == ["extra:dead_0", "extra:pages"]
    assert doc["extra_dims"] == [name for name in doc["numeric_dims"] if name.startswith("extra:")]
    assert build_schema(workload()).to_dict()["extra_dims"] == []


def test_empty_workload() -> None:
    with pytest.raises(EmptyWorkload):
        build_schema([])


def test_encode_operator_sections() -> None:
    schema = build_schema(workload())
    sort = workload()[0].root
    values = encode_operator(sort, schema).values

    assert values[schema.sections["node_type"]].tolist() == [0.0, 0.0, 0.0, 1.0]
    assert values[schema.sections["table"]].sum() == 0.0
    numeric = dict(zip(schema.numeric_dims, values[schema.sections["numeric"]]))
    assert numeric["est_rows_log"] == pytest.approx(math.log1p(50))
    assert numeric["child1_rows_log"] == pytest.approx(math.log1p(50))
    assert numeric["child2_rows_log"] == 0.0

    empty_scan = workload()[1].root.children[0]
    assert dict(zip(schema.numeric_dims, encode_operator(empty_scan, schema).values[schema.sections["numeric"]]))[
        "est_rows_log"
    ] == 0.0


def test_out_of_vocabulary_table() -> None:
    schema = build_schema(workload())
    node = plan_tree(plan_node("Seq Scan", relation="zzz")).root
    values = encode_operator(node, schema).values
    assert values[schema.sections["table"]].sum() == 0.0
    assert values[schema.sections["node_type"]].sum() == 1.0


def test_encode_is_pure_and_masking_idempotent() -> None:
    schema = build_schema(workload())
    node = workload()[1].root
    assert np.array_equal(encode_operator(node, schema).values, encode_operator(node, schema).values)

    mask = list(schema.active_mask)
    mask[0] = mask[schema.sections["numeric"].start] = False
    reduced = schema.with_mask(mask, "test")
    vec = encode_operator(node, reduced)
    assert vec.values[0] == 0.0 and vec.values[reduced.sections["numeric"].start] == 0.0
    assert np.array_equal(mask_vector(mask_vector(vec, reduced), reduced).values, vec.values)

    with pytest.raises(SchemaMismatch):
        mask_vector(encode_operator(node, schema), reduced)


def test_apply_snapshot() -> None:
    snapshots = {"env0": FeatureSnapshot("env0", {"SeqScan": [2.0, 5.0], "Sort": [1.0, 1.0]})}
    schema = build_schema([workload()[0]], snapshots)
    scan = workload()[0].root.children[0]

    # A single training environment leaves the coefficients raw
    vec = apply_snapshot(encode_operator(scan, schema), snapshots["env0"], "SeqScan", schema)
    assert vec.values[schema.sections["snapshot"]].tolist() == [2.0, 5.0, 0.0, 0.0]
    before = encode_operator(scan, schema).values
    outside = np.ones(schema.dim, dtype=bool)
    outside[schema.sections["snapshot"]] = False
    assert np.array_equal(vec.values[outside], before[outside])

    with pytest.raises(MissingOperatorSnapshot):
        apply_snapshot(encode_operator(scan, schema), FeatureSnapshot("env1", {}), "SeqScan", schema)
    zeros = apply_snapshot(encode_operator(scan, schema), FeatureSnapshot("env1", {}), "SeqScan", schema, "zeros")
    assert zeros.values[schema.sections["snapshot"]].sum() == 0.0


def test_environments_differ_only_in_snapshot_dims() -> None:
    snapshots = {
        "env0": FeatureSnapshot("env0", {"SeqScan": [2.0, 5.0], "Sort": [1.0, 1.0]}),
        "env1": FeatureSnapshot("env1", {"SeqScan": [4.0, 10.0], "Sort": [2.0, 2.0]}),
    }
    tree = workload()[0]
    schema = build_schema([tree], snapshots)
    a = encode_plan(tree, schema, snapshots["env0"]).vectors
    b = encode_plan(tree, schema, snapshots["env1"]).vectors
    section = schema.sections["snapshot"]
    assert not np.allclose(a[:, section], b[:, section])
    other = np.ones(schema.dim, dtype=bool)
    other[section] = False
    assert np.array_equal(a[:, other], b[:, other])


def test_encode_plan_labels() -> None:
    schema = build_schema(workload())
    plans = encode_workload(workload(), schema)
    sort = plans[0]
    assert sort.tags == ["SeqScan", "Sort"]
    assert sort.children == [[], [0]]
    assert sort.label == 20.0
    assert sort.own_costs.tolist() == [10.0, 10.0]
    assert plans[1].heights == [0, 0, 1]


if __name__ == "__main__":
    run_tests()
