import numpy as np
import pytest
import torch

from src.core import TrainConfig, train
from src.features import build_schema, encode_workload
from src.features.encode import EncodedPlan, FeatureVector
from src.models import (
    FLAT,
    PLAN_STRUCTURED,
    CostModel,
    export_weights,
    import_weights,
    predict,
    predict_batch,
    predict_operator,
    raw_operator_outputs,
)
from src.models.cost_model import raw_plan_outputs
from src.reduction import input_gradients
from src.util.errors import NonPositiveLabel, ShapeMismatch, UnknownOperator, UsageError, VersionMismatch
from tests import model_from_layers, random_layers, run_tests, synth_trees


SMALL = dict(iterations=25, batch_size=16, hidden_sizes=[16, 16], hidden_width=4)


def workload(n_plans: int = 60):
    trees = synth_trees(n_plans=n_plans)
    schema = build_schema(trees)
    return schema, encode_workload(trees, schema)


def single_node(schema_hash: str = "toy", dim: int = 3, tag: str = "SeqScan", values=None) -> EncodedPlan:
    vectors = np.zeros((1, dim)) if values is None else np.atleast_2d(np.asarray(values, dtype=np.float64))
    return EncodedPlan(vectors=vectors, tags=[tag], children=[[]], schema_hash=schema_hash, label=1.0)


def test_config_validation() -> None:
    for bad in (dict(iterations=0), dict(batch_size=0), dict(learning_rate=0.0), dict(loss="l1")):
        with pytest.raises(UsageError):
            TrainConfig(**bad)


def test_training_is_deterministic() -> None:
    _, plans = workload()
    for kind in (FLAT, PLAN_STRUCTURED):
        a = export_weights(train(plans, TrainConfig(seed=5, **SMALL), kind))
        b = export_weights(train(plans, TrainConfig(seed=5, **SMALL), kind))
        assert a["units"] == b["units"]
        assert a["meta"]["loss_curve"] == b["meta"]["loss_curve"]


def test_loss_curve_decreases() -> None:
    _, plans = workload(200)
    model = train(plans, TrainConfig(iterations=60, batch_size=32, hidden_sizes=[32, 32], seed=1), FLAT)
    curve = model.meta["loss_curve"]
    assert len(curve) == 61
    assert curve[-1] < curve[0]
    assert all(later <= earlier for earlier, later in zip(curve, curve[1:]))
    assert model.train_time_s > 0


def test_single_plan_is_memorized() -> None:
    _, plans = workload(1)
    model = train(plans[:1], TrainConfig(**SMALL), FLAT)
    assert predict(model, plans[0]) == pytest.approx(plans[0].label, rel=1e-6)


def test_non_positive_label() -> None:
    _, plans = workload(5)
    plans[2].label = 0.0
    with pytest.raises(NonPositiveLabel):
        train(plans, TrainConfig(**SMALL), FLAT)


def test_prediction_is_clamped() -> None:
    zero = model_from_layers([([[0.0, 0.0, 0.0]], [0.0], "identity")])
    assert predict(zero, single_node()) == 1e-6

    # A relu unit pushed below zero for this input, identity output
    dead = model_from_layers([([[-3.0, 1.0, 6.0, -1.0]], [5.0], "relu"), ([[1.0]], [0.0], "identity")])
    x = np.asarray([[1.0, 0.0, 0.0, 50.0]])
    assert raw_operator_outputs(dead, x)[0] == 0.0
    assert predict_operator(dead, FeatureVector(x[0], "toy")) == 1e-6


def test_hand_set_weights() -> None:
    model = model_from_layers([([[1.0, 0.0, 0.0]], [0.0], "identity")])
    assert raw_operator_outputs(model, np.asarray([2.0, 7.0, -1.0]))[0] == 2.0
    assert predict(model, single_node(values=[2.0, 7.0, -1.0])) == pytest.approx(np.expm1(2.0))


def test_plan_structured_single_node_calls_one_unit() -> None:
    _, plans = workload()
    model = train(plans, TrainConfig(**SMALL), PLAN_STRUCTURED)
    calls = {tag: 0 for tag in model.units}
    for tag, unit in model.units.items():
        unit.register_forward_hook(lambda module, inputs, output, tag=tag: calls.__setitem__(tag, calls[tag] + 1))

    scan = next(plan for plan in plans if len(plan.tags) == 1)
    predict(model, scan)
    assert calls[scan.tags[0]] == 1
    assert sum(calls.values()) == 1


def test_operator_tag_is_read_through_the_schema_vocabulary() -> None:
    # HashJoin is in the vocabulary but never got a unit
    model = CostModel(
        PLAN_STRUCTURED, "toy", 3, [4], node_types=["SeqScan", "Sort"], type_vocab=["HashJoin", "SeqScan", "Sort"]
    )
    with torch.no_grad():
        for tag, unit in model.units.items():
            for layer in unit.layers:
                layer.weight.zero_()
                layer.bias.zero_()
            unit.layers[-1].bias[0] = 1.0 if tag == "SeqScan" else 4.0

    seq_scan = FeatureVector(np.asarray([0.0, 1.0, 0.0]), "toy")
    assert predict_operator(model, seq_scan) == predict_operator(model, seq_scan, tag="SeqScan")
    assert predict_operator(model, seq_scan) == pytest.approx(np.expm1(1.0))
    with pytest.raises(UnknownOperator):
        predict_operator(model, FeatureVector(np.asarray([1.0, 0.0, 0.0]), "toy"))

    again = import_weights(export_weights(model))
    assert again.type_vocab == ("HashJoin", "SeqScan", "Sort")
    assert predict_operator(again, seq_scan) == predict_operator(model, seq_scan)


def test_trained_models_carry_the_schema_vocabulary() -> None:
    schema, plans = workload()
    model = train(plans, TrainConfig(**SMALL), PLAN_STRUCTURED)
    assert model.type_vocab == tuple(schema.node_types)
    for plan in plans[:10]:
        for i, tag in enumerate(plan.tags):
            vec = FeatureVector(plan.vectors[i], plan.schema_hash)
            assert predict_operator(model, vec) == predict_operator(model, vec, tag=tag)


def test_weight_document_round_trip() -> None:
    _, plans = workload()
    for kind in (FLAT, PLAN_STRUCTURED):
        model = train(plans, TrainConfig(**SMALL), kind)
        again = import_weights(export_weights(model))
        assert np.array_equal(predict_batch(model, plans), predict_batch(again, plans))


def test_malformed_weight_documents() -> None:
    layers = [([[1.0, 2.0], [3.0, 4.0]], [0.0, 0.0], "relu"), ([[1.0, 1.0]], [0.0], "identity")]
    doc = export_weights(model_from_layers(layers))

    truncated = export_weights(import_weights(doc))
    truncated["units"]["flat"]["layers"][0]["w"][1] = [3.0]
    with pytest.raises(ShapeMismatch):
        import_weights(truncated)

    chained = export_weights(import_weights(doc))
    chained["units"]["flat"]["layers"][1]["w"] = [[1.0, 1.0, 1.0]]
    with pytest.raises(ShapeMismatch):
        import_weights(chained)

    with pytest.raises(VersionMismatch):
        import_weights(dict(doc, version=2))


def test_gradients_match_finite_differences() -> None:
    rng = np.random.default_rng(7)
    eps = 1e-6
    for _ in range(20):
        model = model_from_layers(random_layers(rng, [5, 8, 6, 1]))
        x = rng.normal(size=(4, 5))
        grads = input_gradients(model, x)
        for k in range(5):
            step = np.zeros(5)
            step[k] = eps
            numeric = (raw_operator_outputs(model, x + step) - raw_operator_outputs(model, x - step)) / (2 * eps)
            assert np.allclose(grads[:, k], numeric, rtol=1e-3, atol=1e-6)


def test_parameter_gradients_match_finite_differences() -> None:
    _, plans = workload(12)
    targets = torch.tensor([np.log1p(plan.label) for plan in plans], dtype=torch.float64)
    eps = 1e-6
    for kind in (FLAT, PLAN_STRUCTURED):
        model = train(plans, TrainConfig(iterations=3, batch_size=4, hidden_sizes=[6, 4], hidden_width=2), kind)

        def loss() -> torch.Tensor:
            return ((raw_plan_outputs(model, plans) - targets) ** 2).mean()

        model.zero_grad()
        loss().backward()
        for name, param in model.named_parameters():
            analytic = param.grad.numpy().copy()
            numeric = np.zeros_like(analytic)
            entries = param.data.view(-1)
            with torch.no_grad():
                for i in range(entries.numel()):
                    original = entries[i].item()
                    entries[i] = original + eps
                    up = loss().item()
                    entries[i] = original - eps
                    down = loss().item()
                    entries[i] = original
                    numeric.flat[i] = (up - down) / (2 * eps)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-3, atol=1e-7, err_msg=f"{kind} {name}")


def test_forward_is_float64() -> None:
    model = model_from_layers(random_layers(np.random.default_rng(0), [3, 4, 1]))
    assert all(p.dtype == torch.float64 for p in model.parameters())


if __name__ == "__main__":
    run_tests()
