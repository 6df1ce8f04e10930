"""
Executed query plan parsing, dataset IO, and operator-level label extraction
"""

from .ingest import (
    JOIN_TAGS,
    KNOWN_TAGS,
    LabeledOperator,
    PlanNode,
    PlanTree,
    extract_labeled_operators,
    ingest_directory,
    load_dataset,
    parse_plan,
    plan_label,
    plan_to_record,
    split_dataset,
    tree_from_record,
    write_dataset,
)
