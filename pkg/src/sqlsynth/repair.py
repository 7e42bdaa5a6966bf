"""Query execution, example containment, and one-edit repair.

A finished candidate is executed against the task database and its
result is compared with the user-supplied example tuples.  When the
candidate misses, close variants are tried: every query whose rendered
form differs in exactly one lexeme, where the changed lexeme is an
aggregation function, a connective, a comparison operator, or a column
reference.  Constants are never touched.
"""

from __future__ import annotations

import enum
import sqlite3
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

from .checker import Label
from .nsql.errors import ParseError
from .nsql.grammar import parse_complete
from .nsql.lexemes import (
    AGGREGATIONS,
    COMPARISONS,
    CONNECTIVES,
    is_column_ref,
    split_line,
)
from .nsql.query import NormalizedQuery, denormalize_text
from .tasks import DatabaseSchema, ExampleTuple

ROW_LIMIT = 100_000
_PROGRESS_EVERY = 1_000


class ExecutionStatus(enum.Enum):
    OK = "ok"
    ERROR = "error"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class ExecutionResult:
    status: ExecutionStatus
    rows: tuple[tuple, ...] = ()
    error: str = ""

    @classmethod
    def success(cls, rows: tuple[tuple, ...]) -> "ExecutionResult":
        return cls(ExecutionStatus.OK, rows=rows)

    @classmethod
    def failure(cls, message: str) -> "ExecutionResult":
        return cls(ExecutionStatus.ERROR, error=message)

    @classmethod
    def timed_out(cls) -> "ExecutionResult":
        return cls(ExecutionStatus.TIMEOUT, error="statement timed out")

    @property
    def ok(self) -> bool:
        return self.status is ExecutionStatus.OK


def execute_text(
    conn: sqlite3.Connection,
    sql: str,
    *,
    timeout: float = 1.0,
    row_limit: int = ROW_LIMIT,
) -> ExecutionResult:
    """Run one statement with a wall-clock budget and a row cap."""
    deadline = time.monotonic() + timeout
    timed_out = False

    def watchdog() -> int:
        nonlocal timed_out
        if time.monotonic() > deadline:
            timed_out = True
            return 1
        return 0

    conn.set_progress_handler(watchdog, _PROGRESS_EVERY)
    try:
        cursor = conn.execute(sql)
        rows: list[tuple] = []
        while True:
            chunk = cursor.fetchmany(1024)
            if not chunk:
                break
            rows.extend(tuple(row) for row in chunk)
            if len(rows) > row_limit:
                return ExecutionResult.failure(
                    f"result exceeds {row_limit} rows"
                )
        return ExecutionResult.success(tuple(rows))
    except sqlite3.Error as exc:
        if timed_out:
            return ExecutionResult.timed_out()
        return ExecutionResult.failure(str(exc))
    finally:
        conn.set_progress_handler(None, 0)


def execute_query(
    conn: sqlite3.Connection,
    query: NormalizedQuery,
    *,
    timeout: float = 1.0,
    row_limit: int = ROW_LIMIT,
) -> ExecutionResult:
    sql = denormalize_text(query.render())
    return execute_text(conn, sql, timeout=timeout, row_limit=row_limit)


def canonical_value(value: object) -> object:
    """Collapse numeric representations so 2, 2.0 and True compare equal."""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def canonical_row(row: Sequence[object]) -> tuple:
    return tuple(canonical_value(value) for value in row)


def rows_match(
    left: Iterable[Sequence[object]],
    right: Iterable[Sequence[object]],
    *,
    ordered: bool = False,
) -> bool:
    """Compare result sets as sequences or as multisets."""
    a = [canonical_row(row) for row in left]
    b = [canonical_row(row) for row in right]
    if ordered:
        return a == b
    return sorted(a, key=repr) == sorted(b, key=repr)


def satisfies_examples(
    result: ExecutionResult, examples: Iterable[ExampleTuple]
) -> bool:
    """True when every example tuple occurs among the result rows."""
    if not result.ok:
        return False
    produced = {canonical_row(row) for row in result.rows}
    return all(canonical_row(ex.values) in produced for ex in examples)


# -- One-edit variants ------------------------------------------------------

_AGG_MEMBERS = tuple(AGGREGATIONS)
_CONNECTIVE_MEMBERS = tuple(CONNECTIVES)
_COMPARISON_MEMBERS = tuple(COMPARISONS)


def _alternatives(lexeme: str, schema: DatabaseSchema) -> tuple[str, ...]:
    if lexeme in AGGREGATIONS:
        pool: tuple[str, ...] = _AGG_MEMBERS
    elif lexeme in CONNECTIVES:
        pool = _CONNECTIVE_MEMBERS
    elif lexeme in COMPARISONS:
        pool = _COMPARISON_MEMBERS
    elif is_column_ref(lexeme):
        pool = schema.column_refs()
    else:
        return ()
    return tuple(member for member in pool if member != lexeme)


def hamming_one_queries(
    query: NormalizedQuery, schema: DatabaseSchema
) -> Iterator[NormalizedQuery]:
    """Yield every parseable query one lexeme-substitution away.

    Positions are visited left to right through the rendered text;
    alternatives keep their declaration order.  Substitutions that do
    not parse (for instance turning a join condition's ``=`` into
    ``!=``) are dropped silently.
    """
    lines = query.render().rstrip("\n").split("\n")
    split_lines: list[list[str]] = []
    for line in lines:
        lexemes, _ = split_line(line, terminated=True)
        split_lines.append(list(lexemes))
    for line_index, lexemes in enumerate(split_lines):
        for position, lexeme in enumerate(lexemes):
            for replacement in _alternatives(lexeme, schema):
                patched = list(lexemes)
                patched[position] = replacement
                candidate_lines = [
                    " ".join(split_lines[i]) if i != line_index else " ".join(patched)
                    for i in range(len(split_lines))
                ]
                text = "\n".join(candidate_lines) + "\n"
                try:
                    yield parse_complete(text)
                except ParseError:
                    continue


# -- Test and repair --------------------------------------------------------


@dataclass(frozen=True)
class RepairOutcome:
    query: NormalizedQuery
    result: ExecutionResult
    satisfied: bool
    repaired: bool
    variants_tried: int


def test_and_repair(
    query: NormalizedQuery,
    conn: sqlite3.Connection,
    schema: DatabaseSchema,
    examples: Iterable[ExampleTuple],
    *,
    attempt_repair: bool = True,
    prefilter: Callable[[str, bool], object] | None = None,
    per_variant_timeout: float = 1.0,
    deadline: float | None = None,
) -> RepairOutcome:
    """Execute the candidate; on a miss, walk its one-edit neighbours.

    ``prefilter`` takes rendered text plus an end-of-sequence flag and
    returns a verdict with an ``ok`` attribute; variants it rejects are
    skipped without touching the database.  ``deadline`` is an absolute
    ``time.monotonic`` value past which no further variant runs.
    """
    example_list = tuple(examples)

    def budget() -> float:
        if deadline is None:
            return per_variant_timeout
        return min(per_variant_timeout, deadline - time.monotonic())

    first_budget = budget()
    if first_budget <= 0:
        original = ExecutionResult.timed_out()
    else:
        original = execute_query(conn, query, timeout=first_budget)
    if satisfies_examples(original, example_list):
        return RepairOutcome(query, original, True, False, 0)
    if not attempt_repair:
        return RepairOutcome(query, original, False, False, 0)

    tried = 0
    for variant in hamming_one_queries(query, schema):
        if deadline is not None and time.monotonic() >= deadline:
            break
        if prefilter is not None:
            verdict = prefilter(variant.render(), True)
            if not getattr(verdict, "ok", True):
                continue
        remaining = budget()
        if remaining <= 0:
            break
        tried += 1
        result = execute_query(conn, variant, timeout=remaining)
        if satisfies_examples(result, example_list):
            return RepairOutcome(variant, result, True, True, tried)
    return RepairOutcome(query, original, False, False, tried)


# -- Execution-based labeling ----------------------------------------------


def label_by_execution(
    text: str,
    conn: sqlite3.Connection,
    *,
    gold_rows: Sequence[Sequence[object]] | None = None,
    examples: Iterable[ExampleTuple] = (),
    timeout: float = 1.0,
) -> Label:
    """Classify a finished query by actually running it.

    With ``gold_rows`` the query must reproduce them as a multiset to
    count as correct; otherwise example containment decides.
    """
    result = execute_text(conn, denormalize_text(text), timeout=timeout)
    if result.status is ExecutionStatus.TIMEOUT:
        return Label.RUNTIME_ERROR
    if result.status is ExecutionStatus.ERROR:
        if "syntax" in result.error.lower():
            return Label.SYNTAX_ERROR
        return Label.RUNTIME_ERROR
    if gold_rows is not None:
        if rows_match(result.rows, gold_rows):
            return Label.CORRECT
        return Label.EXAMPLE_ERROR
    if satisfies_examples(result, examples):
        return Label.CORRECT
    return Label.EXAMPLE_ERROR
