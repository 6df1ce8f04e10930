"""
callbacks.py

Training callbacks: hooks the trainer invokes at the start/end of training and after every epoch. The JSONL callback
writes one metrics record per epoch (plus a final summary with the wall-clock training time), mirroring how run metrics
are persisted elsewhere in the toolkit.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import jsonlines


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.core.callbacks")


class TrainerCallback:
    """No-op base class; override the hooks you need."""

    def on_train_begin(self, initial_loss: float, learning_rate: float) -> None:
        pass

    def on_epoch_end(self, epoch: int, loss: float, learning_rate: float, restored: bool) -> None:
        pass

    def on_train_end(self, final_loss: float, train_time_s: float) -> None:
        pass


class LoggingCallback(TrainerCallback):
    def __init__(self, every: int = 50) -> None:
        self.every = every

    def on_train_begin(self, initial_loss: float, learning_rate: float) -> None:
        overwatch.info(f"Initial training loss {initial_loss:.6f} (lr = {learning_rate})")

    def on_epoch_end(self, epoch: int, loss: float, learning_rate: float, restored: bool) -> None:
        if restored:
            overwatch.debug(f"Epoch {epoch} regressed; restored weights and halved lr to {learning_rate}")
        if (epoch + 1) % self.every == 0:
            overwatch.info(f"Epoch {epoch + 1} :: loss {loss:.6f} (lr = {learning_rate})")

    def on_train_end(self, final_loss: float, train_time_s: float) -> None:
        overwatch.info(f"Finished training in {train_time_s:.2f}s with loss {final_loss:.6f}")


class JsonlMetricsCallback(TrainerCallback):
    def __init__(self, json_file: Union[str, Path]) -> None:
        self.json_file = json_file

        # Truncate metrics of a previous run with the same output
        with jsonlines.open(self.json_file, mode="w"):
            pass

    def _append_jsonl(self, data: Dict[str, Any]) -> None:
        with jsonlines.open(self.json_file, mode="a") as writer:
            writer.write(data)

    def on_train_begin(self, initial_loss: float, learning_rate: float) -> None:
        self._append_jsonl({"epoch": 0, "loss": initial_loss, "learning_rate": learning_rate, "restored": False})

    def on_epoch_end(self, epoch: int, loss: float, learning_rate: float, restored: bool) -> None:
        self._append_jsonl({"epoch": epoch + 1, "loss": loss, "learning_rate": learning_rate, "restored": restored})

    def on_train_end(self, final_loss: float, train_time_s: float) -> None:
        self._append_jsonl({"final_loss": final_loss, "train_time_s": train_time_s})


def read_train_time(json_file: Union[str, Path]) -> Optional[float]:
    """Training time recorded by a JsonlMetricsCallback, if the file exists."""
    if not Path(json_file).exists():
        return None
    train_time = None
    with jsonlines.open(json_file) as reader:
        for record in reader:
            train_time = record.get("train_time_s", train_time)
    return train_time
