"""
Evaluation metrics (q-error, pearson) and the report/comparison harness
"""

from .harness import EvalReport, compare, dataset_digest, evaluate, load_report, save_report, write_comparison
from .metrics import pearson, percentile, qerror, qerrors
