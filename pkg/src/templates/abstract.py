"""
abstract.py

Data abstract: per table and column, the value type, range, a small distinct-value sample and the table's row count.
Query instantiation draws literal values from it.
"""
import datetime
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

from src.util.errors import DataError, MissingAbstractEntry


COLUMN_TYPES = ("numeric", "text", "date")
MAX_DISTINCT_SAMPLE = 100


def date_to_days(value: str) -> int:
    return datetime.date.fromisoformat(value).toordinal()


def days_to_date(days: int) -> str:
    return datetime.date.fromordinal(days).isoformat()


@dataclass
class ColumnAbstract:
    type: str
    min: Any = None
    max: Any = None
    distinct_sample: List[Any] = field(default_factory=list)
    row_count: int = 0

    @property
    def ordered(self) -> bool:
        return self.type in ("numeric", "date")

    def _key(self, value: Any) -> Any:
        return date_to_days(value) if self.type == "date" else value

    def validate(self, where: str) -> None:
        if self.type not in COLUMN_TYPES:
            raise DataError(f"{where}: type must be one of {COLUMN_TYPES}, got {self.type!r}")
        if len(self.distinct_sample) > MAX_DISTINCT_SAMPLE:
            size = len(self.distinct_sample)
            raise DataError(f"{where}: distinct_sample holds {size} > {MAX_DISTINCT_SAMPLE} values")
        if not self.ordered:
            return
        if self.min is None or self.max is None:
            raise DataError(f"{where}: ordered columns need min and max")
        try:
            low, high = self._key(self.min), self._key(self.max)
            sample = [self._key(v) for v in self.distinct_sample]
        except (TypeError, ValueError) as e:
            raise DataError(f"{where}: unreadable {self.type} value ({e})") from e
        if low > high:
            raise DataError(f"{where}: min {self.min!r} exceeds max {self.max!r}")
        if any(not low <= v <= high for v in sample):
            raise DataError(f"{where}: distinct_sample has values outside [{self.min!r}, {self.max!r}]")


@dataclass
class DataAbstract:
    tables: Dict[str, Dict[str, ColumnAbstract]] = field(default_factory=dict)

    def has_column(self, table: str, column: str) -> bool:
        return column in self.tables.get(table, {})

    def column(self, table: str, column: str) -> ColumnAbstract:
        if not self.has_column(table, column):
            raise MissingAbstractEntry(f"data abstract has no entry for `{table}.{column}`")
        return self.tables[table][column]

    def to_dict(self) -> Dict[str, Dict[str, Dict[str, Any]]]:
        return {
            table: {name: dict(vars(col)) for name, col in columns.items()} for table, columns in self.tables.items()
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "DataAbstract":
        if not isinstance(doc, dict):
            raise DataError("data abstract must be a JSON object of tables")
        tables: Dict[str, Dict[str, ColumnAbstract]] = {}
        for table, columns in doc.items():
            tables[table.lower()] = {}
            for name, entry in columns.items():
                col = ColumnAbstract(
                    type=entry.get("type"),
                    min=entry.get("min"),
                    max=entry.get("max"),
                    distinct_sample=list(entry.get("distinct_sample", [])),
                    row_count=int(entry.get("row_count", 0)),
                )
                col.validate(f"{table}.{name}")
                tables[table.lower()][name.lower()] = col
        return cls(tables)


def load_abstract(path: Union[str, Path]) -> DataAbstract:
    with open(path, "r", encoding="utf-8") as f:
        try:
            return DataAbstract.from_dict(json.load(f))
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e


def save_abstract(abstract: DataAbstract, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(abstract.to_dict(), f, indent=2)
