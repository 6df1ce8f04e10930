"""
Operator and plan featurization: schema construction, one-hot/numeric encoding, and snapshot augmentation
"""

from .encode import (
    FALLBACK_ZEROS,
    EncodedPlan,
    FeatureVector,
    apply_snapshot,
    encode_operator,
    encode_plan,
    encode_workload,
    mask_vector,
)
from .schema import FeatureSchema, build_schema, load_schema, save_schema
