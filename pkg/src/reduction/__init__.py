"""
Feature reduction: difference-propagation importance plus gradient and greedy baselines, and applying their reports
"""

from .dataset import ReductionDataset, build_reduction_dataset, from_encoded, unit_groups
from .difference import diff_importance, forward_trace, pair_path_sums
from .gradient import gradient_importance, input_gradients
from .greedy import greedy_reduce, operator_qerror
from .report import ImportanceReport, apply_reduction, load_report, save_report
