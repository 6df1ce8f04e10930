"""
Live (PostgreSQL) and replay query runners that turn SQL files into executed plan datasets
"""

from .postgres import DBConfig, PostgresRunner, resolve_password, run_sql_file
