"""
qcfe.py

Single command-line entry point for the cost estimation feature pipeline: ingest executed plans, fit feature
snapshots, generate simplified query templates, run (or replay) queries, train cost models, reduce features, evaluate
and compare variants, transfer models across environments, and generate synthetic benchmarks.

Every subcommand accepts `--config <yaml>` (a Quinfig validated by `conf/pipeline_schema.py`); explicit flags override
the config. Outputs are files; stdout carries a one-line JSON summary. Exit status is 0 on success, 1 on usage errors
and 2 on data errors.

|=>> A QCFE Pipeline Entry Point
"""
import argparse
import contextlib
import json
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional

from quinine import Quinfig

from conf.pipeline_schema import get_schema
from src.core import JsonlMetricsCallback, LoggingCallback, TrainConfig, read_train_time, train, transfer_snapshot
from src.eval import compare, evaluate, load_report, save_report, write_comparison
from src.features import build_schema, encode_workload, load_schema, save_schema
from src.models import load_model, save_model
from src.overwatch import get_overwatch
from src.plans import ingest_directory, load_dataset, write_dataset
from src.reduction import (
    apply_reduction,
    build_reduction_dataset,
    diff_importance,
    gradient_importance,
    greedy_reduce,
    save_report as save_importance_report,
)
from src.runner import DBConfig, run_sql_file
from src.snapshot import fit_snapshots, load_snapshots, save_snapshots
from src.synth import generate_workload, load_spec, write_workload
from src.templates import gen_simplified_templates, instantiate, load_abstract, parse_templates, split_statements
from src.util import MODEL_REGISTRY, REDUCTION_REGISTRY, create_paths
from src.util.errors import DataError, UsageError


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.cli")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class CLIArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises (instead of exiting) so usage errors share the CLI's exit-status mapping."""

    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


# === Helpers ===


def metrics_path(model_path: str) -> Path:
    return Path(model_path).with_suffix(".metrics.jsonl")


def schema_path(output_path: str) -> Path:
    return Path(output_path).with_suffix(".schema.json")


def pick(flag: Any, fallback: Any, name: str) -> Any:
    """Flag value if given, else the config value; neither is a usage error."""
    value = flag if flag is not None else fallback
    if value is None:
        raise UsageError(f"missing required value for --{name} (flag or config)")
    return value


@contextlib.contextmanager
def loading(path: Any) -> Iterator[None]:
    """Attach the offending file (and line, when known) to anything that goes wrong while reading `path`."""
    try:
        yield
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: invalid UTF-8 at byte {e.start}: {e.reason}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    except (KeyError, TypeError) as e:
        raise DataError(f"{path}: missing or mistyped field {e}") from e
    except DataError as e:
        if str(path) in str(e):
            raise
        raise DataError(f"{path}: {e}") from e


def train_config(quinfig: Quinfig, iterations: Optional[int] = None, seed: Optional[int] = None) -> TrainConfig:
    return TrainConfig(
        iterations=iterations if iterations is not None else quinfig.train.iterations,
        batch_size=quinfig.train.batch_size,
        learning_rate=quinfig.train.learning_rate,
        seed=seed if seed is not None else quinfig.seed,
        loss=quinfig.train.loss,
        hidden_sizes=list(quinfig.train.hidden_sizes),
        hidden_width=quinfig.train.hidden_width,
        supervision=quinfig.train.supervision,
    )


def read_snapshots(path: Optional[str]) -> Optional[Dict]:
    if path is None:
        return None
    with loading(path):
        return load_snapshots(path)


def read_inputs(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    """Dataset, schema, model and snapshots shared by reduce / eval / transfer."""
    dataset = pick(args.dataset, quinfig.paths.dataset, "dataset")
    model_file = pick(args.model, quinfig.paths.model, "model")
    schema_file = pick(args.schema, quinfig.paths.schema, "schema")
    with loading(dataset):
        trees = load_dataset(dataset)
    with loading(schema_file):
        schema = load_schema(schema_file)
    with loading(model_file):
        model = load_model(model_file)
    snapshots = read_snapshots(args.snapshot if args.snapshot is not None else quinfig.paths.snapshot)
    return {"trees": trees, "schema": schema, "model": model, "model_file": model_file, "snapshots": snapshots}


# === Subcommands ===


def cmd_ingest(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    env_id = args.env_id or quinfig.env_id
    trees = ingest_directory(args.plans, env_id)
    write_dataset(trees, args.out)
    return {"plans": len(trees), "env_id": env_id, "out": args.out}


def cmd_snapshot_fit(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    dataset = pick(args.dataset, quinfig.paths.dataset, "dataset")
    with loading(dataset):
        trees = load_dataset(dataset)
    snapshots = fit_snapshots(trees)
    save_snapshots(snapshots, args.out)
    return {
        "envs": sorted(snapshots),
        "diagnostics": {env_id: snap.diagnostics for env_id, snap in snapshots.items()},
        "out": args.out,
    }


def cmd_templates_gen(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    with loading(args.abstract):
        abstract = load_abstract(args.abstract)
    statements = split_statements(Path(args.queries).read_text(encoding="utf-8"))
    info = parse_templates(statements, abstract)
    templates = gen_simplified_templates(info)

    scale = pick(args.scale, quinfig.templates.scale, "scale")
    seed = pick(args.seed, quinfig.templates.seed if quinfig.templates.seed is not None else quinfig.seed, "seed")
    queries = instantiate(templates, abstract, scale, seed)
    with open(args.out, "w", encoding="utf-8") as f:
        f.writelines(f"{query.sql};\n" for query in queries)

    manifest_file = args.manifest or str(Path(args.out).with_suffix(".manifest.json"))
    manifest = {
        "templates": [template.to_dict() for template in templates],
        "queries": [{"query": i, **query.manifest} for i, query in enumerate(queries)],
    }
    with open(manifest_file, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    return {"entries": len(info), "templates": len(templates), "queries": len(queries), "manifest": manifest_file}


def cmd_run(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    env_id = args.env_id or quinfig.env_id
    trees = run_sql_file(args.sql, DBConfig.from_dict(quinfig.db), env_id, replay_dir=args.replay)
    write_dataset(trees, args.out)
    return {"plans": len(trees), "env_id": env_id, "replay": args.replay is not None, "out": args.out}


def cmd_train(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    dataset = pick(args.dataset, quinfig.paths.dataset, "dataset")
    out = pick(args.out, quinfig.paths.model, "out")
    with loading(dataset):
        trees = load_dataset(dataset)
    snapshots = read_snapshots(args.snapshot if args.snapshot is not None else quinfig.paths.snapshot)

    schema_file = args.schema or quinfig.paths.schema
    if schema_file is not None and Path(schema_file).exists():
        with loading(schema_file):
            schema = load_schema(schema_file)
    else:
        schema = build_schema(trees, snapshots)
    plans = encode_workload(trees, schema, snapshots, quinfig.featurize.snapshot_fallback)

    kind = MODEL_REGISTRY[args.model or quinfig.model.kind]
    callbacks = [LoggingCallback(), JsonlMetricsCallback(metrics_path(out))]
    model = train(plans, train_config(quinfig, args.iters, args.seed), kind, schema.active_mask, callbacks=callbacks)
    save_model(model, out)

    schema_out = args.schema_out or str(schema_path(out))
    save_schema(schema, schema_out)
    return {
        "model": out,
        "kind": kind,
        "schema": schema_out,
        "schema_hash": schema.hash,
        "final_loss": model.meta["loss_curve"][-1],
        "train_time_s": model.train_time_s,
    }


def cmd_reduce(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    inputs = read_inputs(args, quinfig)
    schema, model = inputs["schema"], inputs["model"]
    fallback = quinfig.featurize.snapshot_fallback
    data = build_reduction_dataset(inputs["trees"], schema, inputs["snapshots"], fallback)

    method = REDUCTION_REGISTRY[args.method or quinfig.reduction.method]
    seed = pick(args.seed, quinfig.reduction.seed if quinfig.reduction.seed is not None else quinfig.seed, "seed")
    if method == "diff":
        report = diff_importance(data, model, pick(args.refs, quinfig.reduction.refs, "refs"), seed)
    elif method == "grad":
        report = gradient_importance(data, model)
    else:
        retrain = None
        if quinfig.reduction.retrain_per_drop:
            plans = encode_workload(inputs["trees"], schema, inputs["snapshots"], fallback)
            cfg = train_config(quinfig, seed=seed)

            def retrain(mask):
                return train(plans, cfg, model.kind, active_mask=mask, node_types=model.node_types or None)

        report = greedy_reduce(data, model, retrain)

    save_importance_report(report, args.out)
    reduced = apply_reduction(schema, report)
    schema_out = args.schema_out or str(schema_path(args.out))
    save_schema(reduced, schema_out)
    return {
        "method": method,
        "kept": sum(report.kept),
        "dropped": len(report.dropped),
        "runtime_ms": report.runtime_ms,
        "schema": schema_out,
        "schema_hash": reduced.hash,
    }


def cmd_eval(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    inputs = read_inputs(args, quinfig)
    plans = encode_workload(
        inputs["trees"], inputs["schema"], inputs["snapshots"], quinfig.featurize.snapshot_fallback
    )
    label = args.label or Path(inputs["model_file"]).stem
    train_time = read_train_time(metrics_path(inputs["model_file"]))
    report = evaluate(inputs["model"], plans, label, train_time)
    out = pick(args.out, quinfig.paths.report, "out")
    save_report(report, out)
    return {"variant": label, "mean_qerror": report.mean_qerror, "pearson": report.pearson, "out": out}


def cmd_compare(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    reports = []
    for path in args.reports:
        with loading(path):
            reports.append(load_report(path))
    doc = compare(reports)
    write_comparison(doc, args.out_csv, args.out_json)
    return {"rows": len(doc["rows"]), "baseline": doc["baseline"], "footnotes": doc["footnotes"]}


def cmd_transfer(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    inputs = read_inputs(args, quinfig)
    snapshots, trees = inputs["snapshots"], inputs["trees"]
    if not snapshots:
        raise UsageError("transfer needs --snapshot with the new environment's snapshot")

    env_id = trees[0].env_id if trees else None
    if env_id in snapshots:
        snapshot = snapshots[env_id]
    elif len(snapshots) == 1:
        snapshot = next(iter(snapshots.values()))
    else:
        raise DataError(f"snapshot file holds {sorted(snapshots)} but the dataset is from `{env_id}`")

    iterations = pick(args.iters, quinfig.train.iterations, "iters")
    model = transfer_snapshot(
        trees,
        inputs["model"],
        snapshot,
        iterations,
        inputs["schema"],
        cfg=train_config(quinfig, seed=args.seed),
        fallback=quinfig.featurize.snapshot_fallback,
    )
    save_model(model, args.out)
    return {"model": args.out, "env_id": snapshot.env_id, "iters": iterations}


def cmd_synth(args: argparse.Namespace, quinfig: Quinfig) -> Dict[str, Any]:
    with loading(args.spec):
        spec = load_spec(args.spec)
    trees, manifest = generate_workload(spec)
    write_workload(trees, manifest, args.out, args.manifest)
    return {"plans": len(trees), "envs": manifest["env"], "dead_dims": len(manifest["dead_dims"]), "out": args.out}


# === Argument Parsing ===


def _leaf(subparsers: Any, name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(name, help=help_text)
    parser.add_argument("--config", default=None, help="Pipeline YAML config (validated by conf/pipeline_schema.py)")
    parser.set_defaults(handler=handler)
    return parser


def _model_inputs(parser: argparse.ArgumentParser, snapshot_required: bool = False) -> None:
    parser.add_argument("--dataset", default=None)
    parser.add_argument("--model", default=None)
    parser.add_argument("--schema", default=None)
    parser.add_argument("--snapshot", default=None, required=snapshot_required)


def build_parser() -> CLIArgumentParser:
    parser = CLIArgumentParser(prog="qcfe", description="Feature engineering pipeline for learned cost estimation")
    commands = parser.add_subparsers(dest="command", required=True)

    p = _leaf(commands, "ingest", cmd_ingest, "Parse a directory of EXPLAIN ANALYZE JSON plans into a dataset")
    p.add_argument("--plans", required=True)
    p.add_argument("--env-id", default=None)
    p.add_argument("--out", required=True)

    snapshot = commands.add_parser("snapshot", help="Feature snapshot commands")
    snapshot = snapshot.add_subparsers(dest="action", required=True)
    p = _leaf(snapshot, "fit", cmd_snapshot_fit, "Fit one feature snapshot per environment of a dataset")
    p.add_argument("--dataset", default=None)
    p.add_argument("--out", required=True)

    templates = commands.add_parser("templates", help="Template commands")
    templates = templates.add_subparsers(dest="action", required=True)
    p = _leaf(templates, "gen", cmd_templates_gen, "Generate simplified template queries from original templates")
    p.add_argument("--queries", required=True)
    p.add_argument("--abstract", required=True)
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)

    p = _leaf(commands, "run", cmd_run, "Execute (or replay) a SQL file and collect executed plans")
    p.add_argument("--sql", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--env-id", default=None)
    p.add_argument("--replay", default=None)

    p = _leaf(commands, "train", cmd_train, "Train a cost model")
    p.add_argument("--dataset", default=None)
    p.add_argument("--snapshot", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--model", choices=sorted(MODEL_REGISTRY), default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--schema-out", default=None)

    p = _leaf(commands, "reduce", cmd_reduce, "Score feature dimensions and write a reduced schema")
    _model_inputs(p)
    p.add_argument("--method", choices=sorted(REDUCTION_REGISTRY), default=None)
    p.add_argument("--refs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out", default=None)

    p = _leaf(commands, "eval", cmd_eval, "Evaluate a cost model on a dataset")
    _model_inputs(p)
    p.add_argument("--label", default=None)
    p.add_argument("--out", default=None)

    p = _leaf(commands, "compare", cmd_compare, "Compare evaluation reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", required=True)

    p = _leaf(commands, "transfer", cmd_transfer, "Move a model to a new environment via its feature snapshot")
    _model_inputs(p, snapshot_required=True)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = _leaf(commands, "synth", cmd_synth, "Generate a synthetic multi-environment workload")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", required=True)
    return parser


def load_config(config_path: Optional[str]) -> Quinfig:
    path = config_path or str(Path(__file__).parent / "conf" / "qcfe.yaml")
    if not Path(path).exists():
        raise UsageError(f"--config: no such file `{path}`")
    try:
        return Quinfig(config_path=path, schema=get_schema())
    except Exception as e:
        raise UsageError(f"--config: `{path}` is not valid: {e}") from e


def run_subcommand(argv: List[str]) -> int:
    """
    Parse `argv`, run the chosen subcommand, and print its one-line JSON summary.

    :param argv: Arguments without the program name.

    :return: Exit status (0 ok, 1 usage error, 2 data error).
    """
    try:
        args = build_parser().parse_args(argv)
        quinfig = load_config(args.config)

        # Overwatch :: Console logging, plus a run log when a run directory is configured
        log_path = None
        if quinfig.artifacts.run_dir is not None:
            run_id = quinfig.run_id or f"{args.command}+{datetime.now().strftime('%Y-%m-%d-%H:%M:%S')}"
            log_path = create_paths(run_id, quinfig.artifacts.run_dir)["runs"] / f"{run_id}.log"
        get_overwatch(log_path, quinfig.log_level)

        summary = {"command": args.command, **args.handler(args, quinfig)}
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e.filename}: {e.strerror}", file=sys.stderr)
        return EXIT_DATA
    except UnicodeDecodeError as e:
        print(f"error: input is not valid UTF-8 (byte {e.start}: {e.reason})", file=sys.stderr)
        return EXIT_DATA

    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def main() -> None:
    sys.exit(run_subcommand(sys.argv[1:]))


if __name__ == "__main__":
    main()
