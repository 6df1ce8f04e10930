"""
registry.py

Model/Method Registry :: Human-Readable Identifier --> canonical identifier used inside the toolkit. The CLI and the
config accept any key; code downstream only ever sees the values.
"""

# Model Kinds
MODEL_REGISTRY = {
    "flat": "flat",
    "plan": "plan_structured",
    "plan_structured": "plan_structured",
}

# Feature Reduction Methods
REDUCTION_REGISTRY = {
    "diff": "diff",
    "difference": "diff",
    "greedy": "greedy",
    "grad": "grad",
    "gradient": "grad",
}
