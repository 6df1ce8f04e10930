"""
Modules for core training, fine-tuning across environments, and training metric callbacks
"""

from .callbacks import JsonlMetricsCallback, LoggingCallback, TrainerCallback, read_train_time
from .trainer import CostModelTrainer, TrainConfig, fine_tune, train
from .transfer import transfer_snapshot
