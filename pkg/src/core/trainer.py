"""
trainer.py

Deterministic mini-batch gradient descent for the cost models. Targets are log(1 + cost); after every epoch the full
training loss is measured and, if it regressed, the epoch is rolled back and the learning rate halved, so the recorded
loss curve never increases.
"""
import copy
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch

from src.features.encode import EncodedPlan
from src.models.cost_model import FLAT, PLAN_STRUCTURED, CostModel, collate_plans, pool_plans
from src.util.errors import MissingActuals, NonPositiveLabel, SchemaMismatch, UsageError

from .callbacks import TrainerCallback


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.core.trainer")

LOSSES = ("msle", "mse")
SUPERVISIONS = ("root", "operator")

# Floor for operator own-cost labels (own costs may be clamped to exactly 0)
LABEL_FLOOR_MS = 1e-6


@dataclass
class TrainConfig:
    iterations: int = 400
    batch_size: int = 32
    learning_rate: float = 0.01
    seed: int = 42
    loss: str = "msle"
    hidden_sizes: List[int] = field(default_factory=lambda: [64, 64])
    hidden_width: int = 32
    supervision: str = "root"

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise UsageError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise UsageError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise UsageError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.loss not in LOSSES:
            raise UsageError(f"loss must be one of {LOSSES}, got `{self.loss}`")
        if self.supervision not in SUPERVISIONS:
            raise UsageError(f"supervision must be one of {SUPERVISIONS}, got `{self.supervision}`")


def _loss_fn(name: str) -> Callable[[torch.Tensor, torch.Tensor], torch.Tensor]:
    if name == "msle":
        return lambda raw, target: ((raw - torch.log1p(target)) ** 2).mean()
    return lambda raw, target: ((torch.expm1(raw) - target) ** 2).mean()


def _check_dataset(plans: Sequence[EncodedPlan], cfg: TrainConfig) -> None:
    if not plans:
        raise UsageError("cannot train on an empty dataset")
    hashes = {plan.schema_hash for plan in plans}
    if len(hashes) > 1:
        raise SchemaMismatch(f"training plans are bound to {len(hashes)} different schemas: {sorted(hashes)}")
    for plan in plans:
        if cfg.supervision == "operator" and plan.node_totals is None:
            raise MissingActuals(f"operator supervision needs per-node actuals (query {plan.query_id!r})")
        if cfg.supervision == "root" and (plan.label is None or not plan.label > 0):
            raise NonPositiveLabel(f"query {plan.query_id!r} has label {plan.label!r}; labels must be > 0")


class CostModelTrainer:
    """
    Fits a CostModel on encoded plans. The trainer owns the seeded generator used for initialization and batch order,
    so identical (plans, config) produce bitwise-identical weights.
    """

    def __init__(self, model: CostModel, cfg: TrainConfig, callbacks: Optional[List[TrainerCallback]] = None) -> None:
        self.model, self.cfg, self.callbacks = model, cfg, callbacks or []
        self.loss_fn = _loss_fn(cfg.loss)
        self.generator = torch.Generator().manual_seed(cfg.seed)
        self.train_time_s = 0.0

    # Examples :: flat models see one input row per example; plan-structured models one plan per example
    def _prepare(self, plans: Sequence[EncodedPlan]) -> Tuple[int, Callable[[torch.Tensor], Tuple]]:
        operator_level = self.cfg.supervision == "operator"
        if self.model.kind == FLAT:
            if operator_level:
                inputs = np.concatenate([plan.vectors for plan in plans])
                targets = np.concatenate([np.maximum(plan.own_costs, LABEL_FLOOR_MS) for plan in plans])
            else:
                inputs, targets = pool_plans(plans), np.asarray([plan.label for plan in plans])
            x, y = torch.from_numpy(inputs), torch.from_numpy(targets.astype(np.float64))

            def flat_examples(idx: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
                return self.model.forward_pooled(x[idx]), y[idx]

            return len(x), flat_examples

        def plan_examples(idx: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
            chosen = [plans[i] for i in idx.tolist()]
            batch = collate_plans(chosen)
            costs = self.model.forward_plans(batch)
            if operator_level:
                target = np.concatenate([np.maximum(plan.node_totals, LABEL_FLOOR_MS) for plan in chosen])
                return costs, torch.from_numpy(target)
            return costs[batch.roots], torch.tensor([plan.label for plan in chosen], dtype=torch.float64)

        return len(plans), plan_examples

    def _fit_normalization(self, plans: Sequence[EncodedPlan]) -> None:
        if self.model.kind == FLAT and self.cfg.supervision == "root":
            inputs = pool_plans(plans)
        else:
            inputs = np.concatenate([plan.vectors for plan in plans])
        std = inputs.std(axis=0)
        std[std < 1e-12] = 1.0
        self.model.input_mean.copy_(torch.from_numpy(inputs.mean(axis=0)))
        self.model.input_std.copy_(torch.from_numpy(std))

    def _initialize(self, examples: Callable, n: int) -> None:
        with torch.no_grad():
            _, targets = examples(torch.arange(n))
            output_bias = float(torch.log1p(targets).mean())
        for tag in self.model.units:
            self.model.units[tag].reset_parameters(self.generator, output_bias)

    def _full_loss(self, examples: Callable, n: int) -> float:
        with torch.no_grad():
            raw, target = examples(torch.arange(n))
            return float(self.loss_fn(raw, target))

    def fit(self, plans: Sequence[EncodedPlan], initialize: bool = True) -> CostModel:
        """
        Run `cfg.iterations` epochs over `plans`.

        :param plans: Encoded training plans (all bound to the model's schema).
        :param initialize: Fit input normalization and re-initialize weights; False fine-tunes the current weights.

        :return: The trained model (same object, weights updated in place).
        """
        _check_dataset(plans, self.cfg)
        if plans[0].schema_hash != self.model.schema_hash:
            raise SchemaMismatch(
                f"plans are bound to schema {plans[0].schema_hash}, model to {self.model.schema_hash}"
            )

        start_time = time.perf_counter()
        if initialize:
            self._fit_normalization(plans)
        n, examples = self._prepare(plans)
        if initialize:
            self._initialize(examples, n)

        learning_rate = self.cfg.learning_rate
        optimizer = torch.optim.SGD(self.model.parameters(), lr=learning_rate)
        previous = self._full_loss(examples, n)
        curve = [previous]
        for callback in self.callbacks:
            callback.on_train_begin(previous, learning_rate)

        for epoch in range(self.cfg.iterations):
            checkpoint = copy.deepcopy(self.model.state_dict())
            order = torch.randperm(n, generator=self.generator)
            for begin in range(0, n, self.cfg.batch_size):
                raw, target = examples(order[begin : begin + self.cfg.batch_size])
                optimizer.zero_grad()
                self.loss_fn(raw, target).backward()
                optimizer.step()

            # Roll back regressing epochs and halve the learning rate
            loss, restored = self._full_loss(examples, n), False
            if not loss <= previous:
                self.model.load_state_dict(checkpoint)
                learning_rate /= 2
                for group in optimizer.param_groups:
                    group["lr"] = learning_rate
                loss, restored = previous, True

            curve.append(loss)
            previous = loss
            for callback in self.callbacks:
                callback.on_epoch_end(epoch, loss, learning_rate, restored)

        self.train_time_s = time.perf_counter() - start_time
        for callback in self.callbacks:
            callback.on_train_end(previous, self.train_time_s)

        self.model.meta.update(
            {
                "iters": self.cfg.iterations,
                "seed": self.cfg.seed,
                "loss": self.cfg.loss,
                "supervision": self.cfg.supervision,
                "loss_curve": curve,
                "final_learning_rate": learning_rate,
            }
        )
        return self.model


def train(
    dataset: Sequence[EncodedPlan],
    cfg: TrainConfig,
    kind: str,
    active_mask: Optional[Sequence[bool]] = None,
    node_types: Optional[Sequence[str]] = None,
    callbacks: Optional[List[TrainerCallback]] = None,
) -> CostModel:
    """
    Train a fresh cost model.

    :param dataset: Encoded plans with cost labels.
    :param cfg: Training configuration.
    :param kind: "flat" or "plan_structured".
    :param active_mask: Schema mask; masked inputs are zeroed inside the model as well.
    :param node_types: Operator tags that get a unit (plan-structured); defaults to the tags seen in `dataset`.
    :param callbacks: Training callbacks.

    :return: Trained CostModel; `model.train_time_s` holds the wall-clock training time.
    """
    _check_dataset(dataset, cfg)
    if kind == PLAN_STRUCTURED and node_types is None:
        node_types = sorted({tag for plan in dataset for tag in plan.tags})

    input_dim = dataset[0].vectors.shape[1]
    model = CostModel(
        kind=kind,
        schema_hash=dataset[0].schema_hash,
        input_dim=input_dim,
        hidden_sizes=cfg.hidden_sizes,
        node_types=node_types or (),
        hidden_width=cfg.hidden_width,
        type_vocab=dataset[0].type_vocab,
    )
    if active_mask is not None:
        model.input_mask.copy_(torch.tensor([float(m) for m in active_mask], dtype=torch.float64))

    trainer = CostModelTrainer(model, cfg, callbacks)
    trainer.fit(dataset)
    model.train_time_s = trainer.train_time_s
    return model


def fine_tune(
    model: CostModel,
    dataset: Sequence[EncodedPlan],
    cfg: TrainConfig,
    callbacks: Optional[List[TrainerCallback]] = None,
) -> CostModel:
    """Continue training `model` (in place) for `cfg.iterations` epochs, keeping its input normalization."""
    trainer = CostModelTrainer(model, cfg, callbacks)
    trainer.fit(dataset, initialize=False)
    model.train_time_s = trainer.train_time_s
    return model
