"""
errors.py

Exception hierarchy shared by every stage of the pipeline. `DataError` subclasses describe bad inputs (malformed
plans, schema mismatches, empty workloads); `UsageError` describes a bad invocation. The CLI maps the former to exit
status 2 and the latter to exit status 1.
"""
from typing import List, Optional, Tuple


class QCFEError(ValueError):
    """Root of all toolkit errors."""


class DataError(QCFEError):
    """Input data (files, plans, models) does not satisfy an operation's contract."""


class UsageError(QCFEError):
    """The caller asked for something that cannot be done with the given arguments."""


# Plan Ingest
class MalformedPlan(DataError):
    def __init__(self, message: str, position: str = "$", line: Optional[int] = None) -> None:
        self.position, self.line = position, line
        where = f"line {line}, " if line is not None else ""
        super().__init__(f"{message} (at {where}{position})")


class DatasetLoadError(MalformedPlan):
    def __init__(self, path: str, failures: List[Tuple[int, str]]) -> None:
        self.path, self.failures = path, failures
        first_line, first_msg = failures[0]
        super().__init__(f"{path}: {len(failures)} invalid line(s); first: {first_msg}", line=first_line)


class MissingActuals(DataError):
    pass


# Featurize
class EmptyWorkload(DataError):
    pass


class MissingOperatorSnapshot(DataError):
    pass


class SchemaMismatch(DataError):
    pass


# Snapshot
class WrongOperator(DataError):
    pass


class MissingCardinality(DataError):
    pass


class NoFittableOperator(DataError):
    pass


# Templates
class UnparsableTemplate(DataError):
    pass


class UnknownOperator(DataError):
    pass


class MissingAbstractEntry(DataError):
    pass


# Cost Model
class NonPositiveLabel(DataError):
    pass


class VersionMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


# Reduction
class EmptyReference(DataError):
    pass


class ReferenceOverflow(DataError):
    pass


class DimensionMismatch(DataError):
    pass


# Evaluation
class EmptyTestSet(DataError):
    pass


class LengthMismatch(DataError):
    pass


# Synthetic Benchmark
class InvalidEnvironment(DataError):
    pass


# Runner
class DatabaseError(DataError):
    """The live endpoint refused the connection or a statement."""
