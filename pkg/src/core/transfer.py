"""
transfer.py

Move a trained cost model to a new environment: re-encode the workload with the new environment's feature snapshot
(same schema) and lightly fine-tune a copy of the old weights.
"""
import dataclasses
import logging
from typing import List, Optional

from src.features.encode import encode_plan
from src.features.schema import FeatureSchema
from src.models.cost_model import CostModel, export_weights, import_weights
from src.plans.ingest import PlanTree, is_other
from src.snapshot.fit import FeatureSnapshot
from src.util.errors import MissingOperatorSnapshot

from .trainer import TrainConfig, fine_tune


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.core.transfer")


def transfer_snapshot(
    dataset: List[PlanTree],
    old_model: CostModel,
    new_snapshot: FeatureSnapshot,
    retrain_iters: int,
    schema: FeatureSchema,
    cfg: Optional[TrainConfig] = None,
    fallback: Optional[str] = None,
) -> CostModel:
    """
    :param dataset: Plans measured in the new environment.
    :param old_model: Model trained in the source environment; left untouched.
    :param new_snapshot: Feature snapshot of the new environment.
    :param retrain_iters: Fine-tuning epochs (0 keeps the weights exactly).
    :param schema: Schema the old model was trained with.
    :param cfg: Fine-tuning hyperparameters (iterations are overridden by `retrain_iters`).
    :param fallback: Snapshot fallback for operator types without coefficients.

    :return: New CostModel.
    """
    schema.check(old_model.schema_hash, "model")
    present = {node.node_type for tree in dataset for node in tree.root.walk() if not is_other(node.node_type)}
    missing = sorted(present - set(new_snapshot.coefficients))
    if missing and fallback is None:
        raise MissingOperatorSnapshot(f"snapshot `{new_snapshot.env_id}` does not cover operators {missing}")

    plans = [encode_plan(tree, schema, new_snapshot, fallback) for tree in dataset]
    model = import_weights(export_weights(old_model))
    if retrain_iters == 0:
        return model

    overwatch.info(f"Fine-tuning for {retrain_iters} iterations on {len(plans)} plans of `{new_snapshot.env_id}`")
    cfg = dataclasses.replace(cfg or TrainConfig(), iterations=retrain_iters)
    return fine_tune(model, plans, cfg)
