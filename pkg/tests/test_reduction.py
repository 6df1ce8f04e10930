import itertools
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from src.core import TrainConfig, train
from src.features import build_schema, encode_workload
from src.models import FLAT, PLAN_STRUCTURED, operator_layers
from src.reduction import (
    ReductionDataset,
    apply_reduction,
    diff_importance,
    forward_trace,
    from_encoded,
    gradient_importance,
    greedy_reduce,
    load_report,
    operator_qerror,
    pair_path_sums,
    save_report,
)
from src.reduction.difference import group_scores
from src.util.errors import DimensionMismatch, EmptyReference, ReferenceOverflow, SchemaMismatch
from tests import model_from_layers, random_layers, run_tests, synth_trees


WORK_DIR = None

# relu(x1 + x2) + relu(2 x1 - x2)
TOY = [
    (np.asarray([[1.0, 1.0], [2.0, -1.0]]), np.zeros(2), "relu"),
    (np.asarray([[1.0, 1.0]]), np.zeros(1), "identity"),
]


def setup_module() -> None:
    global WORK_DIR
    WORK_DIR = Path(tempfile.mkdtemp(prefix="qcfe-reduction-"))


def dataset(x, model_hash: str = "toy") -> ReductionDataset:
    x = np.asarray(x, dtype=np.float64)
    return ReductionDataset(x=x, y=np.ones(len(x)), tags=["SeqScan"] * len(x), schema_hash=model_hash)


def enumerated_scores(layers, x: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Literal path enumeration: each edge contributes the ratio of node differences at its ends."""
    sizes = [layers[0][0].shape[1]] + [w.shape[0] for w, _, _ in layers]
    total, count = np.zeros(sizes[0]), np.zeros(sizes[0])
    for row in x:
        for ref in reference:
            deltas = [a[0] - r[0] for a, r in zip(forward_trace(layers, row[None]), forward_trace(layers, ref[None]))]
            for k in range(sizes[0]):
                if deltas[0][k] == 0:
                    continue
                count[k] += 1
                path_sum = 0.0
                for hidden in itertools.product(*[range(n) for n in sizes[1:-1]]):
                    path = (k, *hidden, 0)
                    contribution = 1.0
                    for depth, (i, j) in enumerate(zip(path[:-1], path[1:])):
                        if layers[depth][0][j, i] == 0 or deltas[depth][i] == 0:
                            contribution = 0.0
                            break
                        contribution *= deltas[depth + 1][j] / deltas[depth][i]
                    path_sum += contribution
                total[k] += abs(path_sum)
    return np.divide(total, count, out=np.zeros_like(total), where=count > 0)


def test_hand_computed_scores() -> None:
    x = np.asarray([[1.0, 1.0], [1.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
    assert group_scores(TOY, x, np.zeros((1, 2))).tolist() == pytest.approx([6.0, 3.5], abs=1e-9)


def test_linear_model_scores() -> None:
    linear = [(np.asarray([[2.0, 0.0]]), np.zeros(1), "identity")]
    scores = group_scores(linear, np.asarray([[1.0, 0.0], [3.0, 0.0]]), np.zeros((1, 2)))
    assert scores.tolist() == pytest.approx([2.0, 0.0], abs=1e-9)


def test_path_sums_match_enumeration() -> None:
    rng = np.random.default_rng(11)
    for _ in range(15):
        layers = random_layers(rng, [4, 5, 3, 1], sparsity=0.3)
        x, reference = rng.normal(size=(6, 4)), rng.normal(size=(3, 4))
        x[0, 1] = reference[0, 1]
        assert np.allclose(group_scores(layers, x, reference), enumerated_scores(layers, x, reference), rtol=1e-9)


def test_invalid_pairs_have_zero_sums() -> None:
    x = np.asarray([[1.0, 0.0], [2.0, 3.0]])
    acts, ref_acts = forward_trace(TOY, x), forward_trace(TOY, np.asarray([[1.0, 3.0]]))
    sums, valid = pair_path_sums(TOY, acts, ref_acts)
    assert valid.tolist() == [[False, True], [True, False]]
    assert sums[~valid].tolist() == [0.0, 0.0]


def test_diff_importance_uses_sampled_references() -> None:
    rng = np.random.default_rng(3)
    layers = random_layers(rng, [4, 6, 1], sparsity=0.2)
    data = dataset(rng.normal(size=(40, 4)))
    report = diff_importance(data, model_from_layers(layers), refs=10, seed=9)

    assert len(set(report.reference_ids)) == 10
    assert report.reference_ids == dataset(data.x).sample_references(10, 9)
    assert report.scores == pytest.approx(group_scores(layers, data.x, data.reference).tolist())
    assert report.kept == [s > 1e-12 for s in report.scores]


def test_reference_bounds() -> None:
    model = model_from_layers(TOY)
    data = dataset([[1.0, 1.0], [0.0, 2.0]])
    with pytest.raises(EmptyReference):
        diff_importance(data, model, refs=0, seed=0)
    with pytest.raises(ReferenceOverflow):
        diff_importance(data, model, refs=3, seed=0)
    with pytest.raises(SchemaMismatch):
        diff_importance(dataset(data.x, "other"), model, refs=1, seed=0)


def test_cost_is_linear_in_references() -> None:
    rng = np.random.default_rng(5)
    model = model_from_layers(random_layers(rng, [12, 32, 32, 1]))
    data = dataset(rng.normal(size=(4000, 12)))

    def timed(refs: int) -> float:
        best = float("inf")
        for _ in range(3):
            start_time = time.perf_counter()
            diff_importance(data, model, refs=refs, seed=0)
            best = min(best, time.perf_counter() - start_time)
        return best

    assert 1.5 <= timed(400) / timed(200) <= 2.5


def test_gradient_importance() -> None:
    model = model_from_layers([(np.asarray([[3.0, 0.0, -1.0]]), np.zeros(1), "identity")])
    report = gradient_importance(dataset(np.random.default_rng(0).normal(size=(10, 3))), model)
    assert report.scores == pytest.approx([3.0, 0.0, 1.0])
    assert report.kept == [True, False, True]

    # Every relu is inactive on the data, so every gradient vanishes
    dead = model_from_layers(
        [(np.ones((2, 3)), np.full(2, -100.0), "relu"), (np.ones((1, 2)), np.zeros(1), "identity")]
    )
    data = dataset(np.random.default_rng(1).uniform(size=(10, 3)))
    assert gradient_importance(data, dead).scores == [0.0, 0.0, 0.0]
    assert diff_importance(data, dead, refs=5, seed=0).scores == [0.0, 0.0, 0.0]


def test_greedy_drops_unused_dimensions() -> None:
    # log1p(cost) = 0.5 x0 + 1, with dimensions 1 and 2 wired to nothing
    model = model_from_layers([(np.asarray([[0.5, 0.0, 0.0]]), np.ones(1), "identity")])
    x = np.column_stack([np.linspace(0.0, 4.0, 12), np.full(12, 3.0), np.linspace(-1.0, 1.0, 12)])
    data = ReductionDataset(x=x, y=np.expm1(0.5 * x[:, 0] + 1.0), tags=["SeqScan"] * 12, schema_hash="toy")

    # The constant dimension goes up front; ablating the unwired one only ties, which is not an improvement
    report = greedy_reduce(data, model)
    assert report.kept == [True, False, True]
    assert report.qerror_trace == [pytest.approx(1.0)]
    assert report.scores[0] > 0

    assert diff_importance(data, model, refs=4, seed=1).kept == [True, False, False]


def test_greedy_with_retraining() -> None:
    model = model_from_layers([(np.asarray([[0.5, 0.0]]), np.ones(1), "identity")])
    x = np.column_stack([np.linspace(0.0, 4.0, 8), np.full(8, 2.0)])
    data = ReductionDataset(x=x, y=np.expm1(0.5 * x[:, 0] + 1.0), tags=["SeqScan"] * 8, schema_hash="toy")
    masks = []

    def retrain(mask: np.ndarray):
        masks.append(mask.tolist())
        return model

    report = greedy_reduce(data, model, retrain=retrain)
    assert report.kept == [True, False]
    assert masks == [[True, False], [False, False]]


def test_trained_models_drop_dead_dimensions() -> None:
    trees = synth_trees(n_plans=80, dead_feature_count=5)
    schema = build_schema(trees)
    plans = encode_workload(trees, schema)
    data = from_encoded(plans)
    dead = [schema.dim_names.index(f"extra:dead_{i}") for i in range(5)]

    cfg = TrainConfig(iterations=20, batch_size=16, hidden_sizes=[16, 16], hidden_width=4, supervision="operator")
    for kind in (FLAT, PLAN_STRUCTURED):
        model = train(plans, cfg, kind)
        report = diff_importance(data, model, refs=50, seed=2)
        assert all(not report.kept[k] for k in dead)
        assert any(report.kept)

        reduced = apply_reduction(schema, report)
        assert all(not reduced.active_mask[k] for k in dead)
        assert reduced.hash != schema.hash


def test_diff_keeps_every_dimension_that_matters() -> None:
    trees = synth_trees(n_plans=100, dead_feature_count=9)
    schema = build_schema(trees)
    dead = [schema.dim_names.index(f"extra:dead_{i}") for i in range(9)]
    assert len(dead) >= 0.3 * schema.dim

    plans = encode_workload(trees, schema)
    data = from_encoded(plans)
    cfg = TrainConfig(iterations=150, batch_size=32, hidden_sizes=[32, 32], supervision="operator")
    model = train(plans, cfg, FLAT)
    report = diff_importance(data, model, refs=100, seed=4)
    assert sum(report.scores[k] <= 1e-12 for k in dead) >= 0.9 * len(dead)

    means, base = data.x.mean(axis=0), operator_qerror(model, data, data.x)
    for k in range(schema.dim):
        ablated = data.x.copy()
        ablated[:, k] = means[k]
        if operator_qerror(model, data, ablated) > 1.05 * base:
            assert report.kept[k], schema.dim_names[k]

    greedy = greedy_reduce(data, model)
    assert all(not greedy.kept[k] for k in dead)
    assert greedy.kept.count(False) <= report.kept.count(False)
    assert all(later < earlier for earlier, later in zip(greedy.qerror_trace, greedy.qerror_trace[1:]))


def test_operator_layers_fold_normalization() -> None:
    trees = synth_trees(n_plans=40)
    schema = build_schema(trees)
    plans = encode_workload(trees, schema)
    model = train(plans, TrainConfig(iterations=5, hidden_sizes=[8], hidden_width=2), PLAN_STRUCTURED)
    data = from_encoded(plans)
    index = [i for i, tag in enumerate(data.tags) if tag == "SeqScan"]

    layers = operator_layers(model, "SeqScan")
    folded = forward_trace(layers, data.x[index])[-1][:, 0]
    direct = model.forward_operators(torch.from_numpy(data.x[index]), "SeqScan").detach().numpy()
    assert np.allclose(folded, direct, rtol=1e-9, atol=1e-9)


def test_apply_reduction() -> None:
    trees = synth_trees(n_plans=20)
    schema = build_schema(trees)
    model = model_from_layers([(np.ones((1, schema.dim)), np.zeros(1), "identity")], schema_hash=schema.hash)
    report = diff_importance(from_encoded(encode_workload(trees, schema)), model, refs=5, seed=0)

    once = apply_reduction(schema, report)
    assert apply_reduction(once, report) == once
    with pytest.raises(DimensionMismatch):
        apply_reduction(schema, type(report)("diff", [1.0], [True], 0.0))

    path = WORK_DIR / "report.json"
    save_report(report, path)
    assert load_report(path).kept == report.kept


if __name__ == "__main__":
    run_tests()
