"""
Learned cost models (flat and plan-structured) with prediction and portable weights
"""

from .cost_model import (
    FLAT,
    PLAN_STRUCTURED,
    CostModel,
    collate_plans,
    export_weights,
    import_weights,
    load_model,
    operator_layers,
    pool_plans,
    predict,
    predict_batch,
    predict_operator,
    raw_operator_outputs,
    save_model,
)
from .units import MLPUnit
