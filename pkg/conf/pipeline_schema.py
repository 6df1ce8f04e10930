"""
pipeline_schema.py

Cerberus schema used by Quinine for the `qcfe.py` pipeline configuration.
"""
from typing import Any, Dict

from quinine.common.cerberus import (
    default,
    merge,
    nullable,
    schema,
    stdict,
    tboolean,
    tfloat,
    tinteger,
    tlist,
    tstring,
)

from src.util.registry import MODEL_REGISTRY, REDUCTION_REGISTRY


def allowed(values) -> Dict[str, Any]:
    return {"allowed": list(values)}


def empty_mapping_default() -> Dict[str, Any]:
    """`default({})` via a setter: Quinine's gin expansion would otherwise inject a `gin` key into the `{}` literal."""
    return {"default_setter": lambda _: {}}


def section(sub_schema: Dict[str, Any]) -> Dict[str, Any]:
    """A nested mapping that is filled with its defaults when the config omits it."""
    return merge(stdict(sub_schema), empty_mapping_default())


def get_schema() -> Dict[str, Any]:
    """Get the Cerberus schema for the Quinine config used in qcfe.py."""

    # Schema for Input/Output Files (every CLI flag of the same name overrides these)
    paths_schema = {
        "dataset": merge(tstring, nullable, default(None)),
        "schema": merge(tstring, nullable, default(None)),
        "snapshot": merge(tstring, nullable, default(None)),
        "model": merge(tstring, nullable, default(None)),
        "report": merge(tstring, nullable, default(None)),
        "output_dir": merge(tstring, nullable, default(None)),
    }

    # Schema for the Cost Model
    model_schema = {
        "kind": merge(tstring, allowed(sorted(MODEL_REGISTRY)), default("flat")),
    }

    # Schema for Training (mirrors `src.core.trainer.TrainConfig`)
    train_schema = {
        "iterations": merge(tinteger, default(400)),
        "batch_size": merge(tinteger, default(32)),
        "learning_rate": merge(tfloat, default(0.01)),
        "loss": merge(tstring, allowed(["msle", "mse"]), default("msle")),
        "hidden_sizes": merge(tlist, schema(tinteger), default([64, 64])),
        "hidden_width": merge(tinteger, default(32)),
        "supervision": merge(tstring, allowed(["root", "operator"]), default("root")),
    }

    # Schema for Feature Reduction
    reduction_schema = {
        "method": merge(tstring, allowed(sorted(REDUCTION_REGISTRY)), default("diff")),
        "refs": merge(tinteger, default(100)),
        "seed": merge(tinteger, nullable, default(None)),
        "retrain_per_drop": merge(tboolean, default(False)),
    }

    # Schema for Simplified Template Instantiation
    templates_schema = {
        "scale": merge(tinteger, default(10)),
        "seed": merge(tinteger, nullable, default(None)),
    }

    # Schema for Featurization
    featurize_schema = {
        "snapshot_fallback": merge(tstring, nullable, allowed(["zeros"]), default(None)),
    }

    # Schema for the Live Database Endpoint -- the password itself is only ever read from the environment
    db_schema = {
        "host": merge(tstring, default("localhost")),
        "port": merge(tinteger, default(5432)),
        "database": merge(tstring, default("postgres")),
        "user": merge(tstring, default("postgres")),
        "password_env": merge(tstring, default("QCFE_DB_PASSWORD")),
        "session_settings": merge({"type": "dict"}, empty_mapping_default()),
    }

    # Schema for Storing Run Logs
    artifacts_schema = {
        "run_dir": merge(tstring, nullable, default(None)),
    }

    # Combined Schema for `qcfe.py`
    qcfe_schema = {
        "paths": section(paths_schema),
        "model": section(model_schema),
        "train": section(train_schema),
        "reduction": section(reduction_schema),
        "templates": section(templates_schema),
        "featurize": section(featurize_schema),
        "db": section(db_schema),
        "artifacts": section(artifacts_schema),
        "env_id": merge(tstring, default("env0")),
        "seed": merge(tinteger, default(42)),
        "log_level": merge(tinteger, default(20)),
        "run_id": merge(tstring, nullable, default(None)),
    }

    return qcfe_schema
