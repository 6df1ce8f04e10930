"""
parser.py

Keyword-level SQL template parsing: lex each statement with `sqlparse`, split the top level into clauses, and record
which (table, column) pairs each operator would touch:

    - comparison / LIKE / IN / BETWEEN predicates  --> SeqScan + IndexScan
    - equality between columns of two tables       --> MergeJoin + HashJoin + NestedLoop
    - ORDER BY                                     --> Sort (unless the column is a join key of the statement)
    - GROUP BY                                     --> Aggregate

Subqueries are skipped; only the outermost statement is scanned.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

import sqlparse
from sqlparse import tokens as T

from src.util.errors import UnparsableTemplate

from .abstract import DataAbstract


# Nest Overwatch under root `qcfe` logger, inheriting formatting!
overwatch = logging.getLogger("qcfe.templates.parser")

ColumnRef = Tuple[str, str]
JoinRef = Tuple[ColumnRef, ColumnRef]
Entry = Union[ColumnRef, JoinRef]

SCAN_OPERATORS = ("SeqScan", "IndexScan")
JOIN_OPERATORS = ("MergeJoin", "HashJoin", "NestedLoop")

# Lexeme kinds
KEYWORD, NAME, COMPARISON, LITERAL, PUNCT, OTHER = "keyword", "name", "comparison", "literal", "punct", "other"

CLAUSE_KEYWORDS = {"SELECT", "FROM", "WHERE", "GROUP BY", "ORDER BY", "HAVING", "LIMIT", "OFFSET", "ON", "USING"}
PREDICATE_KEYWORDS = {"IN", "BETWEEN", "LIKE", "ILIKE", "IS"}
TYPED_LITERALS = {"DATE", "TIME", "TIMESTAMP", "INTERVAL"}


@dataclass(frozen=True)
class Lexeme:
    kind: str
    value: str


@dataclass
class OperatorTableColumnInfo:
    """Operator tag --> set of (table, column) pairs; join operators map to pairs of (table, column) pairs."""

    entries: Dict[str, Set[Entry]] = field(default_factory=dict)

    def add(self, operator: str, entry: Entry) -> None:
        self.entries.setdefault(operator, set()).add(entry)

    def update(self, other: "OperatorTableColumnInfo") -> None:
        for operator, entries in other.entries.items():
            for entry in entries:
                self.add(operator, entry)

    def issubset(self, other: "OperatorTableColumnInfo") -> bool:
        return all(entries <= other.entries.get(operator, set()) for operator, entries in self.entries.items())

    def scan_columns(self, table: str) -> List[str]:
        """Columns of `table` that appear in scan predicates (sorted)."""
        return sorted({column for op in SCAN_OPERATORS for (t, column) in self.entries.get(op, set()) if t == table})

    def __len__(self) -> int:
        return sum(len(entries) for entries in self.entries.values())

    def to_dict(self) -> Dict[str, List]:
        return {operator: sorted(entries) for operator, entries in sorted(self.entries.items())}


# === Lexing ===


def _lex(statement: str) -> List[Lexeme]:
    lexemes = []
    for token in sqlparse.parse(statement)[0].flatten():
        if token.is_whitespace or token.ttype in T.Comment:
            continue
        value = " ".join(token.value.split())
        if token.ttype in T.Keyword:
            lexemes.append(Lexeme(KEYWORD, value.upper()))
        elif token.ttype in T.Literal.String.Symbol:
            lexemes.append(Lexeme(NAME, value.strip('"')))
        elif token.ttype in T.Name:
            lexemes.append(Lexeme(NAME, value))
        elif token.ttype in T.Operator.Comparison:
            lexemes.append(Lexeme(COMPARISON, value.upper()))
        elif token.ttype in T.Literal:
            lexemes.append(Lexeme(LITERAL, value))
        elif token.ttype in T.Punctuation:
            lexemes.append(Lexeme(PUNCT, value))
        else:
            lexemes.append(Lexeme(OTHER, value))
    return lexemes


def _drop_subqueries(lexemes: List[Lexeme]) -> List[Lexeme]:
    """Replace every parenthesized SELECT by a single placeholder literal."""
    out: List[Lexeme] = []
    i = 0
    while i < len(lexemes):
        nested = lexemes[i].value == "(" and i + 1 < len(lexemes) and lexemes[i + 1].value.upper() == "SELECT"
        if not nested:
            out.append(lexemes[i])
            i += 1
            continue
        depth = 0
        while i < len(lexemes):
            depth += {"(": 1, ")": -1}.get(lexemes[i].value, 0) if lexemes[i].kind == PUNCT else 0
            i += 1
            if depth == 0:
                break
        out.append(Lexeme(LITERAL, "?"))
    return out


def _split_clauses(lexemes: List[Lexeme]) -> Dict[str, List[Lexeme]]:
    """Group top-level lexemes by clause; JOIN segments stay in FROM (the JOIN keyword acts as a separator)."""
    clauses: Dict[str, List[Lexeme]] = {}
    current, depth = "SELECT", 0
    for lexeme in lexemes:
        if lexeme.kind == PUNCT and lexeme.value in "()":
            depth += 1 if lexeme.value == "(" else -1
        if depth == 0 and lexeme.kind == KEYWORD:
            if lexeme.value.endswith("JOIN"):
                current = "FROM"
                clauses.setdefault(current, []).append(lexeme)
                continue
            if lexeme.value in CLAUSE_KEYWORDS:
                current = lexeme.value
                clauses.setdefault(current, [])
                continue
        clauses.setdefault(current, []).append(lexeme)
    return clauses


def _from_aliases(lexemes: List[Lexeme]) -> Dict[str, str]:
    """Alias (or bare table name) --> table, in FROM order."""
    aliases: Dict[str, str] = {}
    expect_table, last_table = True, None
    for i, lexeme in enumerate(lexemes):
        separator = lexeme.kind == PUNCT and lexeme.value == ","
        if separator or (lexeme.kind == KEYWORD and lexeme.value.endswith("JOIN")):
            expect_table, last_table = True, None
        elif lexeme.kind == NAME:
            # Skip the schema part of `schema.table`
            if i + 1 < len(lexemes) and lexemes[i + 1].value == ".":
                continue
            name = lexeme.value.lower()
            if expect_table:
                aliases[name], last_table, expect_table = name, name, False
            elif last_table is not None:
                aliases[name], last_table = last_table, None
    return aliases


# === Column Resolution ===


class _Resolver:
    def __init__(self, aliases: Dict[str, str], abstract: Optional[DataAbstract]) -> None:
        self.aliases, self.abstract = aliases, abstract
        self.tables = list(dict.fromkeys(aliases.values()))

    def resolve(self, qualifier: Optional[str], column: str) -> Optional[ColumnRef]:
        column = column.lower()
        if qualifier is not None:
            table = self.aliases.get(qualifier.lower())
            if table is None:
                overwatch.warning(f"Skipping `{qualifier}.{column}`: `{qualifier}` is not a FROM table")
            return (table, column) if table is not None else None

        candidates = [t for t in self.tables if self.abstract is not None and self.abstract.has_column(t, column)]
        if not candidates and len(self.tables) == 1:
            candidates = self.tables
        if len(candidates) != 1:
            overwatch.warning(f"Skipping unresolvable column `{column}` ({len(candidates)} candidate tables)")
            return None
        return candidates[0], column


def _items(lexemes: List[Lexeme], resolver: _Resolver) -> List[Tuple[str, object]]:
    """Reduce clause lexemes to a stream of ("col", ref) / ("op", op) / ("val", text) / ("sep", text) items."""
    items: List[Tuple[str, object]] = []
    i = 0
    while i < len(lexemes):
        lexeme, following = lexemes[i], lexemes[i + 1] if i + 1 < len(lexemes) else None
        typed = lexeme.kind in (NAME, KEYWORD) and lexeme.value.upper() in TYPED_LITERALS
        if typed and following is not None and following.kind == LITERAL:
            # Typed literal such as DATE '1995-01-01'
            items.append(("val", f"{lexeme.value} {following.value}"))
            i += 2
            continue
        if lexeme.kind == NAME:
            if lexeme.value.upper() in PREDICATE_KEYWORDS and following is not None and following.value == "(":
                items.append(("op", lexeme.value.upper()))
            elif following is not None and following.value == "(":
                pass
            elif following is not None and following.value == "." and i + 2 < len(lexemes):
                ref = resolver.resolve(lexeme.value, lexemes[i + 2].value)
                items.append(("col", ref) if ref is not None else ("val", "?"))
                i += 3
                continue
            else:
                ref = resolver.resolve(None, lexeme.value)
                items.append(("col", ref) if ref is not None else ("val", "?"))
        elif lexeme.kind == COMPARISON:
            items.append(("op", lexeme.value))
        elif lexeme.kind == KEYWORD and lexeme.value in PREDICATE_KEYWORDS:
            items.append(("op", lexeme.value))
        elif lexeme.kind == KEYWORD and lexeme.value != "NOT":
            items.append(("sep", lexeme.value))
        elif lexeme.kind == LITERAL:
            items.append(("val", lexeme.value))
        elif lexeme.kind == OTHER:
            items.append(("sep", lexeme.value))
        i += 1
    return items


def _columns(lexemes: List[Lexeme], resolver: _Resolver) -> List[ColumnRef]:
    return [ref for kind, ref in _items(lexemes, resolver) if kind == "col"]  # type: ignore


# === Statements ===


def parse_statement(statement: str, abstract: Optional[DataAbstract] = None) -> OperatorTableColumnInfo:
    """Operator-table-column entries of a single SELECT statement."""
    lexemes = _drop_subqueries(_lex(statement))
    if not lexemes or lexemes[0].kind != KEYWORD or lexemes[0].value != "SELECT":
        raise UnparsableTemplate(f"not a SELECT statement: {statement.strip()[:60]!r}")

    clauses = _split_clauses(lexemes[1:])
    resolver = _Resolver(_from_aliases(clauses.get("FROM", [])), abstract)
    info = OperatorTableColumnInfo()

    # Predicates :: scans on `col OP value`, joins on `col = col` across tables
    join_keys: Set[ColumnRef] = set()
    items = _items(clauses.get("WHERE", []) + [Lexeme(KEYWORD, "AND")] + clauses.get("ON", []), resolver)
    for i, (kind, ref) in enumerate(items):
        op = items[i + 1] if i + 1 < len(items) else None
        right = items[i + 2] if i + 2 < len(items) else None
        if kind == "col" and op is not None and op[0] == "op":
            if op[1] == "=" and right is not None and right[0] == "col" and right[1][0] != ref[0]:  # type: ignore
                pair = tuple(sorted([ref, right[1]]))  # type: ignore
                for operator in JOIN_OPERATORS:
                    info.add(operator, pair)  # type: ignore
                join_keys.update(pair)  # type: ignore
                continue
            for operator in SCAN_OPERATORS:
                info.add(operator, ref)  # type: ignore
        elif kind == "val" and op is not None and op[0] == "op" and right is not None and right[0] == "col":
            for operator in SCAN_OPERATORS:
                info.add(operator, right[1])  # type: ignore

    for ref in _columns(clauses.get("ORDER BY", []), resolver):
        if ref not in join_keys:
            info.add("Sort", ref)
    for ref in _columns(clauses.get("GROUP BY", []), resolver):
        info.add("Aggregate", ref)
    return info


def split_statements(sql_text: str) -> List[str]:
    """`;`-separated statements of a SQL file, comments stripped, empty statements dropped."""
    statements = []
    for statement in sqlparse.split(sql_text):
        statement = sqlparse.format(statement, strip_comments=True).strip().rstrip(";").strip()
        if statement:
            statements.append(statement)
    return statements


def parse_templates(templates: Iterable[str], abstract: Optional[DataAbstract] = None) -> OperatorTableColumnInfo:
    """
    Keyword-match every template and merge the operator-table-column entries.

    :param templates: SQL statements (each a single SELECT).
    :param abstract: Optional data abstract used to resolve unqualified columns.

    :return: Merged OperatorTableColumnInfo (empty for no templates).
    """
    info = OperatorTableColumnInfo()
    for statement in templates:
        info.update(parse_statement(statement, abstract))
    return info
