"""
harness.py

Evaluate trained cost models on a held-out test set and compare the resulting reports across pipeline variants
(baseline, +snapshot, +reduction, ...).
"""
import csv
import hashlib
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from src.features.encode import EncodedPlan
from src.models.cost_model import CostModel, predict_batch
from src.util.errors import EmptyTestSet, MissingActuals, UsageError

from .metrics import pearson, percentile, qerrors


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.eval.harness")

CSV_HEADER = ["variant", "pearson", "mean_qerror", "p50", "p90", "p95", "train_s", "throughput"]
TIMED_PASSES = 3


@dataclass
class EvalReport:
    variant_label: str
    mean_qerror: float
    qerror_p50: float
    qerror_p90: float
    qerror_p95: float
    pearson: float
    n_examples: int
    train_time_s: Optional[float]
    inference_throughput_per_s: float
    test_set_id: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "EvalReport":
        return cls(**doc)


def dataset_digest(plans: Sequence[EncodedPlan]) -> str:
    digest = hashlib.sha256("\n".join(f"{p.env_id}/{p.query_id}" for p in plans).encode("utf-8"))
    return digest.hexdigest()[:16]


def evaluate(
    model: CostModel,
    test: Sequence[EncodedPlan],
    variant_label: str = "model",
    train_time_s: Optional[float] = None,
    passes: int = TIMED_PASSES,
) -> EvalReport:
    """
    Score `model` on `test`: metrics come from a single prediction pass; throughput (plans / second) is the median
    over `passes` further timed passes.
    """
    if not test:
        raise EmptyTestSet("cannot evaluate on an empty test set")
    for plan in test:
        if plan.label is None:
            raise MissingActuals(f"test plan {plan.query_id!r} has no cost label")

    labels = np.asarray([plan.label for plan in test])
    predictions = predict_batch(model, test)
    errors = qerrors(labels, predictions)

    timings = []
    for _ in range(max(passes, TIMED_PASSES)):
        start_time = time.perf_counter()
        predict_batch(model, test)
        timings.append(time.perf_counter() - start_time)
    elapsed = statistics.median(timings)

    report = EvalReport(
        variant_label=variant_label,
        mean_qerror=float(errors.mean()),
        qerror_p50=percentile(errors, 50),
        qerror_p90=percentile(errors, 90),
        qerror_p95=percentile(errors, 95),
        pearson=pearson(labels, predictions) if len(test) >= 2 else 0.0,
        n_examples=len(test),
        train_time_s=train_time_s,
        inference_throughput_per_s=len(test) / elapsed if elapsed > 0 else float("inf"),
        test_set_id=dataset_digest(test),
    )
    overwatch.info(
        f"[{variant_label}] mean q-error {report.mean_qerror:.4f} :: pearson {report.pearson:.4f} "
        f"over {report.n_examples} plans"
    )
    return report


def compare(reports: List[EvalReport]) -> Dict[str, Any]:
    """
    Comparison table of >= 2 reports, rows sorted by variant label. `delta_mean_qerror` is relative to the first
    report given (the baseline).
    """
    if len(reports) < 2:
        raise UsageError(f"compare needs at least 2 reports, got {len(reports)}")

    baseline = reports[0]
    rows = []
    for report in sorted(reports, key=lambda r: r.variant_label):
        row = report.to_dict()
        row["delta_mean_qerror"] = (report.mean_qerror - baseline.mean_qerror) / baseline.mean_qerror
        rows.append(row)

    footnotes = []
    test_sets = sorted({report.test_set_id for report in reports})
    if len(test_sets) > 1:
        footnotes.append(f"reports come from {len(test_sets)} different test sets and are not comparable")
    if any(report.train_time_s is None for report in reports):
        footnotes.append("train_s is empty where the training time was not recorded")
    return {"baseline": baseline.variant_label, "rows": rows, "footnotes": footnotes}


def _cell(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6g}"


def write_comparison(doc: Dict[str, Any], csv_path: Union[str, Path], json_path: Union[str, Path]) -> None:
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in doc["rows"]:
            writer.writerow(
                [
                    row["variant_label"],
                    _cell(row["pearson"]),
                    _cell(row["mean_qerror"]),
                    _cell(row["qerror_p50"]),
                    _cell(row["qerror_p90"]),
                    _cell(row["qerror_p95"]),
                    _cell(row["train_time_s"]),
                    _cell(row["inference_throughput_per_s"]),
                ]
            )
        for note in doc["footnotes"]:
            f.write(f"# {note}\n")

    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)


def save_report(report: EvalReport, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)


def load_report(path: Union[str, Path]) -> EvalReport:
    with open(path, "r", encoding="utf-8") as f:
        return EvalReport.from_dict(json.load(f))
