"""
Per-environment feature snapshots fitted from logical operator cost formulas
"""

from .fit import FeatureSnapshot, fit_snapshot, fit_snapshots, group_operators, load_snapshots, save_snapshots
from .formulas import FORMULAS, SNAPSHOT_SLOTS, FormulaSpec, design_matrix
