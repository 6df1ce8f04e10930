import inspect
import json
import os
import sys
import traceback
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.models.cost_model import WEIGHTS_VERSION, CostModel, import_weights
from src.plans.ingest import PlanTree, tree_from_record
from src.synth.bench import SynthTable, SynthWorkloadSpec, generate_workload


QCFE_TEST_DIR = os.getenv("QCFE_TEST_DIR") or "."

# plan builders


def plan_node(
    node_type: str = "Seq Scan",
    time: Optional[float] = 1.0,
    loops: Optional[float] = 1.0,
    rows: float = 10.0,
    relation: Optional[str] = None,
    index: Optional[str] = None,
    children: Optional[List[Dict[str, Any]]] = None,
    extras: Optional[Dict[str, float]] = None,
    total_cost: float = 10.0,
) -> Dict[str, Any]:
    """
    Build one EXPLAIN (ANALYZE, FORMAT JSON) node object; pass `time=None` to leave out runtime statistics.
    """
    node: Dict[str, Any] = {
        "Node Type": node_type,
        "Plan Rows": rows,
        "Plan Width": 8,
        "Startup Cost": 0.0,
        "Total Cost": total_cost,
        "Actual Rows": rows,
    }
    if time is not None:
        node["Actual Total Time"] = time
    if loops is not None:
        node["Actual Loops"] = loops
    if relation is not None:
        node["Relation Name"] = relation
    if index is not None:
        node["Index Name"] = index
    if children:
        node["Plans"] = children
    if extras:
        node["Extra Features"] = extras
    return node


def plan_tree(node: Dict[str, Any], env_id: str = "env0", query_id: str = "q0") -> PlanTree:
    return tree_from_record({"env_id": env_id, "query_id": query_id, "plan": node})


def plan_text(node: Dict[str, Any], execution_time: Optional[float] = None) -> str:
    """EXPLAIN JSON document text as PostgreSQL prints it: a one-element list around {"Plan": ...}."""
    doc: Dict[str, Any] = {"Plan": node}
    if execution_time is not None:
        doc["Execution Time"] = execution_time
    return json.dumps([doc])


# model builders


def model_from_layers(
    layers: Sequence[Sequence[Any]], schema_hash: str = "toy", kind: str = "flat", tag: str = "flat"
) -> CostModel:
    """
    Cost model with hand-set weights; `layers` is a list of (W, b, activation) triples in weight-document order.
    """
    doc = {
        "version": WEIGHTS_VERSION,
        "kind": kind,
        "schema_hash": schema_hash,
        "hidden_width": 0,
        "units": {
            tag: {
                "layers": [
                    {"w": np.asarray(w, dtype=np.float64).tolist(), "b": list(map(float, b)), "act": act}
                    for w, b, act in layers
                ]
            }
        },
    }
    return import_weights(doc)


def random_layers(rng: np.random.Generator, sizes: Sequence[int], sparsity: float = 0.0) -> List[tuple]:
    """Random relu network (identity output) with a fraction `sparsity` of weights set to exactly zero."""
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = rng.normal(size=(fan_out, fan_in))
        w[rng.uniform(size=w.shape) < sparsity] = 0.0
        act = "identity" if i == len(sizes) - 2 else "relu"
        layers.append((w, rng.normal(scale=0.5, size=fan_out), act))
    return layers


# synthetic workloads


def synth_spec(**overrides: Any) -> SynthWorkloadSpec:
    doc: Dict[str, Any] = {
        "tables": [SynthTable("lineitem", 60000, 120), SynthTable("orders", 15000, 80), SynthTable("nation", 25, 60)],
        "n_plans": 120,
        "seed": 3,
    }
    doc.update(overrides)
    return SynthWorkloadSpec(**doc)


def synth_trees(**overrides: Any) -> List[PlanTree]:
    trees, _ = generate_workload(synth_spec(**overrides))
    return trees


# test runner


def get_test_functions():
    """
    Return all test functions in this module.
    """
    all_test_functions = [
        (name, obj)
        for name, obj in inspect.getmembers(sys.modules["__main__"])
        if (inspect.isfunction(obj) and name.startswith("test") and obj.__module__ == "__main__")
    ]
    return all_test_functions


def get_setup():
    """
    Return this test's setup
    """
    functions = inspect.getmembers(sys.modules["__main__"])
    possible_setup = [
        (name, obj) for (name, obj) in functions if (name == "setup_module" and obj.__module__ == "__main__")
    ]
    if possible_setup:
        return possible_setup[0][1]
    else:
        return None


def run_tests():
    """
    Run each function, catch and report AssertionError's
    """
    print("Running setup_module ...")
    setup_function = get_setup()
    if setup_function:
        setup_function()
        print("Setup successful.")
    else:
        print("No setup_module()")
    test_functions = get_test_functions()
    passing_tests = []
    failing_tests = []
    assertion_errors = []
    with open("test.log", "w") as out_file:
        test_module = sys.modules["__main__"].__file__
        out_file.write(f"Running tests for {test_module}:\n")
        for (name, test_function) in test_functions:
            out_file.write(name + "\n")
            try:
                test_function()
                passing_tests.append(name)
            except AssertionError as e:
                failing_tests.append(name)
                assertion_errors.append((e, traceback.format_exc()))
        out_file.write("\n")
        out_file.write("Test report:\n")
        out_file.write(f"{len(passing_tests)} passed, {len(failing_tests)} failed\n")
        out_file.write("\n")
        out_file.write("Failing tests:\n")
        for test, error in zip(failing_tests, assertion_errors):
            out_file.write("\n")
            out_file.write(f"{test}\n")
            out_file.write(error[1])
            out_file.write("\n")
    if len(failing_tests) > 0:
        sys.exit(1)
