import contextlib
import io
import json
import tempfile
from pathlib import Path

import tests
from qcfe import EXIT_DATA, EXIT_OK, EXIT_USAGE, run_subcommand
from tests import run_tests


WORK_DIR = None
CONFIG = str(Path(tests.__file__).parent / "conf" / "qcfe-test.yaml")
TEMPLATE_DIR = Path(tests.__file__).parent.parent / "conf" / "templates"

SPEC = {
    "tables": [{"name": "lineitem", "rows": 60000, "width": 120}, {"name": "orders", "rows": 15000, "width": 80}],
    "n_plans": 40,
    "seed": 5,
    "dead_feature_count": 2,
    "environments": [1.0, 2.0],
}


def setup_module() -> None:
    global WORK_DIR
    WORK_DIR = Path(tempfile.mkdtemp(prefix="qcfe-cli-"))


def qcfe(*argv: str):
    """Run one subcommand with the test config; returns (exit status, parsed summary or None, stderr)."""
    stdout, stderr = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
        status = run_subcommand([*argv, "--config", CONFIG])
    lines = stdout.getvalue().strip().splitlines()
    return status, json.loads(lines[-1]) if lines else None, stderr.getvalue()


def path(name: str) -> str:
    return str(WORK_DIR / name)


def test_pipeline() -> None:
    (WORK_DIR / "spec.json").write_text(json.dumps(SPEC))
    status, summary, _ = qcfe(
        "synth", "--spec", path("spec.json"), "--out", path("w.jsonl"), "--manifest", path("m.json")
    )
    assert status == EXIT_OK
    assert summary["plans"] == 80 and summary["envs"] == ["envx1", "envx2"]

    status, summary, _ = qcfe("snapshot", "fit", "--dataset", path("w.jsonl"), "--out", path("snap.json"))
    assert status == EXIT_OK and summary["envs"] == ["envx1", "envx2"]

    inputs = ["--dataset", path("w.jsonl"), "--snapshot", path("snap.json")]
    status, summary, _ = qcfe("train", *inputs, "--out", path("base.json"))
    assert status == EXIT_OK and summary["schema"] == path("base.schema.json")
    assert (WORK_DIR / "base.metrics.jsonl").exists()

    model = [*inputs, "--model", path("base.json"), "--schema", path("base.schema.json")]
    status, summary, _ = qcfe("reduce", *model, "--out", path("imp.json"), "--schema-out", path("reduced.schema.json"))
    assert status == EXIT_OK and summary["method"] == "diff"
    assert summary["dropped"] >= 2

    status, _, _ = qcfe("train", *inputs, "--schema", path("reduced.schema.json"), "--out", path("reduced.json"))
    assert status == EXIT_OK

    status, summary, _ = qcfe("eval", *model, "--out", path("base.eval.json"))
    assert status == EXIT_OK and summary["variant"] == "base"
    reduced = [*inputs, "--model", path("reduced.json"), "--schema", path("reduced.schema.json")]
    status, _, _ = qcfe("eval", *reduced, "--label", "+reduction", "--out", path("reduced.eval.json"))
    assert status == EXIT_OK

    reports = [path("base.eval.json"), path("reduced.eval.json")]
    outputs = ["--out-csv", path("c.csv"), "--out-json", path("c.json")]
    status, summary, _ = qcfe("compare", "--reports", *reports, *outputs)
    assert status == EXIT_OK
    assert summary["rows"] == 2 and summary["baseline"] == "base"
    assert (WORK_DIR / "c.csv").read_text().startswith("variant,pearson,mean_qerror")


def test_templates_gen() -> None:
    status, summary, _ = qcfe(
        "templates",
        "gen",
        "--queries",
        str(TEMPLATE_DIR / "tpch.sql"),
        "--abstract",
        str(TEMPLATE_DIR / "tpch-abstract.json"),
        "--out",
        path("gen.sql"),
    )
    assert status == EXIT_OK
    assert summary["queries"] == 2 * summary["templates"]

    lines = (WORK_DIR / "gen.sql").read_text().splitlines()
    assert len(lines) == summary["queries"] and all(line.endswith(";") for line in lines)
    manifest = json.loads(Path(summary["manifest"]).read_text())
    assert len(manifest["queries"]) == len(lines)


def test_usage_errors() -> None:
    status, summary, stderr = qcfe("frobnicate")
    assert status == EXIT_USAGE and summary is None
    assert stderr.startswith("error:")

    status, _, _ = qcfe("train", "--iters", "0", "--dataset", path("nowhere.jsonl"), "--out", path("x.json"))
    assert status in (EXIT_USAGE, EXIT_DATA)

    outputs = ["--out-csv", path("o.csv"), "--out-json", path("o.json")]
    status, _, _ = qcfe("compare", "--reports", path("one.json"), *outputs)
    assert status == EXIT_DATA

    stdout, stderr = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
        assert run_subcommand(["synth", "--spec", "s", "--out", "o", "--manifest", "m", "--config", "nope.yaml"]) == 1


def test_data_errors() -> None:
    bad = WORK_DIR / "bad.jsonl"
    bad.write_text('{"env_id": "env0", "query_id": "q0"}\n')
    status, _, stderr = qcfe("snapshot", "fit", "--dataset", str(bad), "--out", path("s.json"))
    assert status == EXIT_DATA
    assert str(bad) in stderr


if __name__ == "__main__":
    run_tests()
