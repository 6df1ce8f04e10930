import numpy as np
import pytest

from src.core import TrainConfig, train, transfer_snapshot
from src.eval import evaluate
from src.features import build_schema, encode_workload
from src.models import FLAT, export_weights
from src.plans import split_dataset
from src.snapshot import FeatureSnapshot, fit_snapshots
from src.util.errors import MissingOperatorSnapshot, SchemaMismatch
from tests import run_tests, synth_trees


SEEDS = range(5)


def by_env(trees, env_id: str):
    return [tree for tree in trees if tree.env_id == env_id]


def mean_qerror(model, plans) -> float:
    return evaluate(model, plans, passes=1).mean_qerror


def test_snapshot_dims_separate_environments() -> None:
    trees = synth_trees(n_plans=120, environments=[1.0, 2.0, 3.0])
    with_snapshot, without_snapshot = [], []
    for seed in SEEDS:
        train_trees, test_trees = split_dataset(trees, 0.25, seed=seed)
        cfg = TrainConfig(iterations=300, batch_size=32, hidden_sizes=[64, 64], seed=seed)

        snapshots = fit_snapshots(train_trees)
        schema = build_schema(train_trees, snapshots)
        model = train(encode_workload(train_trees, schema, snapshots), cfg, FLAT)
        with_snapshot.append(mean_qerror(model, encode_workload(test_trees, schema, snapshots)))

        schema = build_schema(train_trees)
        model = train(encode_workload(train_trees, schema), cfg, FLAT)
        without_snapshot.append(mean_qerror(model, encode_workload(test_trees, schema)))

    assert np.median(with_snapshot) <= 0.8 * np.median(without_snapshot)


def test_transfer_with_a_quarter_of_the_budget() -> None:
    trees = synth_trees(n_plans=150, environments=[1.0, 2.0])
    snapshots = fit_snapshots(trees)
    source, target = by_env(trees, "envx1"), by_env(trees, "envx2")
    schema = build_schema(source, {"envx1": snapshots["envx1"]})
    budget = 200

    transferred, scratch = [], []
    for seed in SEEDS:
        cfg = TrainConfig(iterations=budget, hidden_sizes=[32, 32], seed=seed)
        old_model = train(encode_workload(source, schema, snapshots), cfg, FLAT)

        train_trees, test_trees = split_dataset(target, 0.25, seed=seed)
        test_plans = encode_workload(test_trees, schema, snapshots)
        moved = transfer_snapshot(train_trees, old_model, snapshots["envx2"], budget // 4, schema, cfg)
        transferred.append(mean_qerror(moved, test_plans))

        fresh = train(encode_workload(train_trees, schema, snapshots), cfg, FLAT)
        scratch.append(mean_qerror(fresh, test_plans))

    assert np.median(transferred) <= 1.1 * np.median(scratch)


def test_zero_iteration_transfer_keeps_weights() -> None:
    trees = synth_trees(n_plans=40, environments=[1.0, 2.0])
    snapshots = fit_snapshots(trees)
    source, target = by_env(trees, "envx1"), by_env(trees, "envx2")
    schema = build_schema(source, snapshots)
    cfg = TrainConfig(iterations=10, hidden_sizes=[8])
    old_model = train(encode_workload(source, schema, snapshots), cfg, FLAT)

    moved = transfer_snapshot(target, old_model, snapshots["envx2"], 0, schema)
    assert moved is not old_model
    assert export_weights(moved)["units"] == export_weights(old_model)["units"]


def test_transfer_errors() -> None:
    trees = synth_trees(n_plans=40)
    snapshots = fit_snapshots(trees)
    schema = build_schema(trees, snapshots)
    model = train(encode_workload(trees, schema, snapshots), TrainConfig(iterations=5, hidden_sizes=[8]), FLAT)

    with pytest.raises(MissingOperatorSnapshot):
        transfer_snapshot(trees, model, FeatureSnapshot("empty", {}), 0, schema)
    assert transfer_snapshot(trees, model, FeatureSnapshot("empty", {}), 0, schema, fallback="zeros") is not model

    with pytest.raises(SchemaMismatch):
        transfer_snapshot(trees, model, snapshots["envx1"], 0, build_schema(trees))


if __name__ == "__main__":
    run_tests()
