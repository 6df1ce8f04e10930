"""
generate.py

Simplified parent templates per operator and their instantiation into executable queries. Scans share one parent
template; the three join operators share a plain and an ORDER BY variant; Sort and Aggregate each have one. No
operator-forcing session commands are emitted: the optimizer picks the physical operator.
"""
import logging
import random
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from src.util.errors import MissingAbstractEntry, UnknownOperator, UsageError

from .abstract import ColumnAbstract, DataAbstract, date_to_days, days_to_date
from .parser import JOIN_OPERATORS, SCAN_OPERATORS, ColumnRef, OperatorTableColumnInfo


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.templates.generate")

ORDERED_OPS = ("<", ">", "=", "<=", ">=")
TEXT_OPS = ("=", "LIKE", "IN")
MAX_IN_LIST = 5
LIKE_PREFIX = 3

PLACEHOLDER = re.compile(r"\[([^\]]+)\]")


@dataclass
class SimplifiedTemplate:
    template_id: int
    operators: List[str]
    tables: Tuple[str, ...]
    columns: Tuple[ColumnRef, ...]
    template_text: str
    condition: Optional[ColumnRef] = None

    @property
    def operator(self) -> str:
        return self.operators[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "template_id": self.template_id,
            "operators": self.operators,
            "text": self.template_text,
            "condition": list(self.condition) if self.condition else None,
        }


@dataclass
class GeneratedQuery:
    sql: str
    template_id: int
    operator: str
    seed: int
    manifest: Dict[str, Any] = field(init=False)

    def __post_init__(self) -> None:
        self.manifest = {"template_id": self.template_id, "operator": self.operator, "seed": self.seed}


# === Parent Templates ===


def _where(condition: Optional[ColumnRef], qualified: bool) -> str:
    if condition is None:
        return ""
    table, column = condition
    return f" WHERE [{table}.{column}]" if qualified else f" WHERE [{column}]"


def _condition(info: OperatorTableColumnInfo, *tables: str) -> Optional[ColumnRef]:
    for table in tables:
        columns = info.scan_columns(table)
        if columns:
            return table, columns[0]
    return None


def parent_templates(
    operator: str, entry: Any, info: OperatorTableColumnInfo
) -> List[Tuple[str, Optional[ColumnRef]]]:
    """(template text, condition column) rows for one operator-table-column entry."""
    if operator in SCAN_OPERATORS:
        table, column = entry
        return [(f"SELECT * FROM {table}{_where(entry, False)}", (table, column))]

    if operator == "Sort":
        table, column = entry
        condition = _condition(info, table)
        return [(f"SELECT * FROM {table}{_where(condition, False)} ORDER BY {table}.{column}", condition)]

    if operator == "Aggregate":
        table, column = entry
        condition = _condition(info, table)
        return [(f"SELECT COUNT(*) FROM {table}{_where(condition, False)} GROUP BY {column}", condition)]

    if operator in JOIN_OPERATORS:
        (left, left_col), (right, right_col) = entry
        condition = _condition(info, left, right)
        join = f"SELECT * FROM {left} JOIN {right} ON {left}.{left_col} = {right}.{right_col}{_where(condition, True)}"
        return [(join, condition), (f"{join} ORDER BY {left}.{left_col}", condition)]

    raise UnknownOperator(f"no parent template for operator `{operator}`")


def gen_simplified_templates(info: OperatorTableColumnInfo) -> List[SimplifiedTemplate]:
    """
    Instantiate parent templates for every (operator, entry) of `info`; identical texts are merged and list every
    operator they serve. Operators without a parent template are skipped with a warning.
    """
    by_text: Dict[str, SimplifiedTemplate] = {}
    for operator in sorted(info.entries):
        for entry in sorted(info.entries[operator]):
            try:
                rows = parent_templates(operator, entry, info)
            except UnknownOperator as e:
                overwatch.warning(f"Skipping {entry}: {e}")
                continue

            pairs = entry if operator in JOIN_OPERATORS else (entry,)
            for text, condition in rows:
                if text in by_text:
                    if operator not in by_text[text].operators:
                        by_text[text].operators.append(operator)
                    continue
                by_text[text] = SimplifiedTemplate(
                    template_id=len(by_text),
                    operators=[operator],
                    tables=tuple(dict.fromkeys(table for table, _ in pairs)),
                    columns=tuple(pairs),
                    template_text=text,
                    condition=condition,
                )
    return list(by_text.values())


# === Instantiation ===


def _quote(value: Any) -> str:
    return "'" + str(value).replace("'", "''") + "'"


def _ordered_literal(col: ColumnAbstract, rng: random.Random) -> str:
    if col.type == "date":
        return f"DATE '{days_to_date(rng.randint(date_to_days(col.min), date_to_days(col.max)))}'"
    if isinstance(col.min, int) and isinstance(col.max, int):
        return str(rng.randint(col.min, col.max))
    return repr(rng.uniform(float(col.min), float(col.max)))


def random_condition(column: str, col: ColumnAbstract, rng: random.Random) -> str:
    """`column OP value` with OP drawn uniformly for the column type and value drawn from the abstract."""
    if col.ordered:
        return f"{column} {rng.choice(ORDERED_OPS)} {_ordered_literal(col, rng)}"

    if not col.distinct_sample:
        raise MissingAbstractEntry(f"text column `{column}` has no distinct_sample to draw from")
    op = rng.choice(TEXT_OPS)
    if op == "=":
        return f"{column} = {_quote(rng.choice(col.distinct_sample))}"
    if op == "LIKE":
        return f"{column} LIKE {_quote(str(rng.choice(col.distinct_sample))[:LIKE_PREFIX] + '%')}"
    values = rng.sample(col.distinct_sample, rng.randint(1, min(MAX_IN_LIST, len(col.distinct_sample))))
    return f"{column} IN ({', '.join(_quote(v) for v in values)})"


def _fill(template: SimplifiedTemplate, abstract: DataAbstract, rng: random.Random) -> str:
    if template.condition is None:
        return template.template_text
    col = abstract.column(*template.condition)
    return PLACEHOLDER.sub(lambda m: random_condition(m.group(1), col, rng), template.template_text)


def instantiate(
    templates: List[SimplifiedTemplate], abstract: DataAbstract, scale: int, seed: int
) -> List[GeneratedQuery]:
    """Round-major instantiation: query r * |templates| + t is round r of template t (drawn with seed + t)."""
    if scale < 1:
        raise UsageError(f"scale must be >= 1, got {scale}")

    # Check coverage before drawing anything
    for template in templates:
        if template.condition is not None:
            abstract.column(*template.condition)

    per_template = []
    for index, template in enumerate(templates):
        rng = random.Random(seed + index)
        per_template.append(
            [
                GeneratedQuery(_fill(template, abstract, rng), template.template_id, template.operator, seed + index)
                for _ in range(scale)
            ]
        )
    return [per_template[t][r] for r in range(scale) for t in range(len(templates))]


def instantiate_queries(
    templates: List[SimplifiedTemplate], abstract: DataAbstract, scale: int, seed: int
) -> List[str]:
    """
    Fill every template `scale` times.

    :param templates: Simplified templates.
    :param abstract: Data abstract covering every condition column.
    :param scale: Queries per template (>= 1).
    :param seed: Base seed; template t draws from `random.Random(seed + t)`.

    :return: scale x |templates| SQL statements.
    """
    return [query.sql for query in instantiate(templates, abstract, scale, seed)]
