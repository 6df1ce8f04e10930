"""
postgres.py

Collect executed plans for a file of SQL statements: either live, by running EXPLAIN (ANALYZE, FORMAT JSON) against a
PostgreSQL endpoint whose session settings define the environment, or offline, by replaying a directory of
pre-collected plan files.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from src.plans.ingest import PlanTree, ingest_directory, parse_plan
from src.templates.parser import split_statements
from src.util.errors import DatabaseError, DataError, UsageError


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.runner.postgres")

# Names the environment variable that holds the password (overrides `password_env`)
PASSWORD_VAR_OVERRIDE = "QCFE_DB_PASSWORD_VAR"
EXPLAIN_PREFIX = "EXPLAIN (ANALYZE, FORMAT JSON) "


@dataclass
class DBConfig:
    host: str = "localhost"
    port: int = 5432
    database: str = "postgres"
    user: str = "postgres"
    password_env: str = "QCFE_DB_PASSWORD"
    session_settings: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: Optional[Mapping[str, Any]]) -> "DBConfig":
        doc = dict(doc or {})
        return cls(**{k: v for k, v in doc.items() if k in cls.__dataclass_fields__ and v is not None})


def resolve_password(db: DBConfig, environ: Mapping[str, str] = os.environ) -> Optional[str]:
    """Password from the environment variable named by the config (or by QCFE_DB_PASSWORD_VAR, when set)."""
    return environ.get(environ.get(PASSWORD_VAR_OVERRIDE) or db.password_env)


class PostgresRunner:
    def __init__(self, db: DBConfig, env_id: str) -> None:
        self.db, self.env_id = db, env_id
        self.connection = None

    def connect(self) -> None:
        # Only the live runner needs a driver
        import psycopg2

        self.connection = psycopg2.connect(
            host=self.db.host,
            port=self.db.port,
            dbname=self.db.database,
            user=self.db.user,
            password=resolve_password(self.db),
        )
        self.connection.autocommit = True
        self.apply_settings()

    def apply_settings(self) -> None:
        from psycopg2 import sql

        with self.connection.cursor() as cursor:
            for knob, value in sorted(self.db.session_settings.items()):
                overwatch.info(f"Setting `{knob}` = {value!r} for environment `{self.env_id}`")
                cursor.execute(sql.SQL("SET {} = %s").format(sql.Identifier(knob)), [str(value)])

    def explain(self, statement: str, query_id: str) -> PlanTree:
        with self.connection.cursor() as cursor:
            cursor.execute(EXPLAIN_PREFIX + statement)
            doc = cursor.fetchone()[0]
        text = doc if isinstance(doc, str) else json.dumps(doc)
        return parse_plan(text, env_id=self.env_id, query_id=query_id)

    @property
    def endpoint(self) -> str:
        return f"{self.db.user}@{self.db.host}:{self.db.port}/{self.db.database}"

    def run(self, statements: List[str]) -> List[PlanTree]:
        try:
            import psycopg2
        except ImportError as e:
            raise UsageError("live runs need `psycopg2-binary`; install it or pass --replay") from e

        try:
            if self.connection is None:
                self.connect()
        except psycopg2.Error as e:
            raise DatabaseError(f"{self.endpoint}: {str(e).strip()}") from e

        trees = []
        for i, statement in enumerate(statements):
            try:
                trees.append(self.explain(statement, f"q{i:05d}"))
            except psycopg2.Error as e:
                raise DatabaseError(f"{self.endpoint}: statement {i + 1} failed: {str(e).strip()}") from e
            if (i + 1) % 50 == 0:
                overwatch.info(f"Executed {i + 1}/{len(statements)} statements")
        return trees

    def close(self) -> None:
        if self.connection is not None:
            self.connection.close()
            self.connection = None


def run_sql_file(
    sql_path: Union[str, Path], db: DBConfig, env_id: str, replay_dir: Optional[Union[str, Path]] = None
) -> List[PlanTree]:
    """
    :param sql_path: File of `;`-separated statements.
    :param db: Database endpoint and session settings (ignored when replaying).
    :param env_id: Environment the plans belong to.
    :param replay_dir: Directory of pre-collected `*.json` plans to read instead of executing.

    :return: One PlanTree per statement.
    """
    statements = split_statements(Path(sql_path).read_text(encoding="utf-8"))
    if not statements:
        raise UsageError(f"{sql_path} contains no statements")

    if replay_dir is not None:
        trees = ingest_directory(replay_dir, env_id)
        if len(trees) != len(statements):
            overwatch.warning(f"Replay directory holds {len(trees)} plans for {len(statements)} statements")
        if not trees:
            raise DataError(f"replay directory {replay_dir} holds no *.json plans")
        return trees

    runner = PostgresRunner(db, env_id)
    try:
        return runner.run(statements)
    finally:
        runner.close()
