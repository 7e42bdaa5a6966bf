"""Static checks over possibly-incomplete canonical query text.

The checker sees only the database schema and the example tuple, never
the database contents.  Three checks run in order of cost: vocabulary
(per-lexeme category membership, with prefix membership for the final
unfinished lexeme), scope (every referenced table must appear in FROM),
and output types against the example.  Verdicts carry the error kind an
execution of the finished query would raise, which also powers the
4-label classifier used by the checker-comparison experiment.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .nsql.errors import ClauseOrderViolation, ParseError
from .nsql.grammar import (
    parse_condition_body,
    parse_from_body,
    parse_group_body,
    parse_order_body,
    parse_select_body,
    validate_clause_body,
)
from .nsql.lexemes import (
    AGGREGATIONS,
    COMPARISONS,
    CONNECTIVES,
    is_column_ref,
    is_identifier,
    is_number,
    is_string_const,
)
from .nsql.partial import PartialParse, parse_partial
from .nsql.query import (
    AggExpr,
    BoolOp,
    ClauseKind,
    ColumnRef,
    Condition,
    NormalizedQuery,
    Predicate,
    SelectItem,
    Star,
)
from .tasks import ColumnType, DatabaseSchema, ExampleTuple, NUMERIC_TYPES


class ErrorKind(enum.Enum):
    SYNTAX = "Syntax"
    RUNTIME = "Runtime"
    EXAMPLE = "Example"


@dataclass(frozen=True)
class CheckVerdict:
    ok: bool
    kind: ErrorKind | None = None
    clause: ClauseKind | None = None
    detail: str = ""

    @classmethod
    def rejected(
        cls, kind: ErrorKind, clause: ClauseKind | None, detail: str
    ) -> "CheckVerdict":
        return cls(ok=False, kind=kind, clause=clause, detail=detail)


PASS = CheckVerdict(ok=True)


# -- Vocabulary -------------------------------------------------------------


@dataclass(frozen=True)
class ClauseVocabulary:
    """Allowed lexeme sets and categories for one clause.

    ``nested_*`` entries apply additionally inside parentheses, where
    IN-subqueries and aggregation arguments live.
    """

    fixed: frozenset[str] = frozenset()
    nested_fixed: frozenset[str] = frozenset()
    classes: frozenset[str] = frozenset()
    nested_classes: frozenset[str] = frozenset()

    def fixed_at(self, depth: int) -> frozenset[str]:
        return self.fixed | self.nested_fixed if depth > 0 else self.fixed

    def classes_at(self, depth: int) -> frozenset[str]:
        return self.classes | self.nested_classes if depth > 0 else self.classes


_SUBQUERY_KEYWORDS = frozenset({"SELECT", "FROM", "WHERE", "JOIN", "ON", "DISTINCT"})
_CONDITION_FIXED = frozenset({"(", ")", ",", "NOT", "IN", "BETWEEN", "LIKE"})

CLAUSE_VOCABULARY: Mapping[ClauseKind, ClauseVocabulary] = {
    ClauseKind.SELECT: ClauseVocabulary(
        fixed=frozenset({"DISTINCT", "(", ")", ","}),
        classes=frozenset({"aggregation", "column_ref", "star"}),
    ),
    ClauseKind.FROM: ClauseVocabulary(
        fixed=frozenset({"JOIN", "ON", "=", "AND"}),
        classes=frozenset({"table", "column_ref"}),
    ),
    ClauseKind.WHERE: ClauseVocabulary(
        fixed=_CONDITION_FIXED,
        nested_fixed=_SUBQUERY_KEYWORDS,
        classes=frozenset({"column_ref", "constant", "comparison", "connective"}),
        nested_classes=frozenset({"aggregation", "star", "table"}),
    ),
    ClauseKind.GROUP_BY: ClauseVocabulary(
        fixed=frozenset({","}),
        classes=frozenset({"column_ref"}),
    ),
    ClauseKind.HAVING: ClauseVocabulary(
        fixed=_CONDITION_FIXED,
        nested_fixed=_SUBQUERY_KEYWORDS,
        classes=frozenset(
            {"column_ref", "constant", "comparison", "connective", "aggregation"}
        ),
        nested_classes=frozenset({"star", "table"}),
    ),
    ClauseKind.ORDER_BY: ClauseVocabulary(
        fixed=frozenset({"ASC", "DESC", "(", ")", ","}),
        nested_fixed=frozenset({"DISTINCT"}),
        classes=frozenset({"column_ref", "aggregation"}),
        nested_classes=frozenset({"star"}),
    ),
    ClauseKind.LIMIT: ClauseVocabulary(classes=frozenset({"integer"})),
}

_NUMBER_PREFIX_RE = re.compile(r"-?\d+(\.\d*)?")


def _schema_has_ref(schema: DatabaseSchema, lexeme: str) -> bool:
    table, column = lexeme.split(".", 1)
    return schema.column_type(table, column) is not None


def _lexeme_verdict(
    lexeme: str,
    clause: ClauseKind,
    depth: int,
    schema: DatabaseSchema,
) -> CheckVerdict:
    vocabulary = CLAUSE_VOCABULARY[clause]
    if lexeme in vocabulary.fixed_at(depth):
        return PASS
    classes = vocabulary.classes_at(depth)
    if "aggregation" in classes and lexeme in AGGREGATIONS:
        return PASS
    if "comparison" in classes and lexeme in COMPARISONS:
        return PASS
    if "connective" in classes and lexeme in CONNECTIVES:
        return PASS
    if "star" in classes and lexeme == "*":
        return PASS
    if "constant" in classes and (is_number(lexeme) or is_string_const(lexeme)):
        return PASS
    if "integer" in classes and lexeme.isdigit():
        return PASS
    if is_column_ref(lexeme):
        if "column_ref" in classes:
            if _schema_has_ref(schema, lexeme):
                return PASS
            return CheckVerdict.rejected(
                ErrorKind.RUNTIME, clause, f"{lexeme!r} is not a schema column"
            )
        return CheckVerdict.rejected(
            ErrorKind.SYNTAX, clause, f"column reference {lexeme!r} not allowed here"
        )
    if "table" in classes and is_identifier(lexeme):
        if schema.table(lexeme) is not None:
            return PASS
        return CheckVerdict.rejected(
            ErrorKind.RUNTIME, clause, f"{lexeme!r} is not a schema table"
        )
    return CheckVerdict.rejected(
        ErrorKind.SYNTAX, clause, f"{lexeme!r} not allowed in {clause.value}"
    )


def _fragment_plausible(
    fragment: str,
    clause: ClauseKind,
    depth: int,
    schema: DatabaseSchema,
) -> CheckVerdict:
    vocabulary = CLAUSE_VOCABULARY[clause]
    lowered = fragment.lower()
    for candidate in vocabulary.fixed_at(depth):
        if candidate.startswith(fragment):
            return PASS
    classes = vocabulary.classes_at(depth)
    members: list[str] = []
    if "aggregation" in classes:
        members.extend(AGGREGATIONS)
    if "comparison" in classes:
        members.extend(COMPARISONS)
    if "connective" in classes:
        members.extend(CONNECTIVES)
    if "star" in classes:
        members.append("*")
    for candidate in members:
        if candidate.startswith(fragment):
            return PASS
    if "constant" in classes:
        if fragment.startswith("'"):
            return PASS  # constant spellings are unbounded
        if fragment == "-" or _NUMBER_PREFIX_RE.fullmatch(fragment):
            return PASS
    if "integer" in classes and fragment.isdigit():
        return PASS
    if "column_ref" in classes:
        for ref in schema.column_refs():
            if ref.lower().startswith(lowered):
                return PASS
    if "table" in classes:
        for table in (t.name for t in schema.tables):
            if table.lower().startswith(lowered):
                return PASS
    if "." in fragment and "column_ref" in classes:
        return CheckVerdict.rejected(
            ErrorKind.RUNTIME,
            clause,
            f"no schema column starts with {fragment!r}",
        )
    return CheckVerdict.rejected(
        ErrorKind.SYNTAX,
        clause,
        f"{fragment!r} cannot extend to a lexeme allowed in {clause.value}",
    )


def check_vocabulary(
    clause: ClauseKind,
    lexemes: Sequence[str],
    last_incomplete: str | None,
    schema: DatabaseSchema,
) -> CheckVerdict:
    """Check a clause body (keyword already stripped) lexeme by lexeme."""
    depth = 0
    for lexeme in lexemes:
        if lexeme == ")":
            depth -= 1
            if depth < 0:
                return CheckVerdict.rejected(
                    ErrorKind.SYNTAX, clause, "unbalanced ')'"
                )
        verdict = _lexeme_verdict(lexeme, clause, depth if lexeme != ")" else depth + 1, schema)
        if not verdict.ok:
            return verdict
        if lexeme == "(":
            depth += 1
    if last_incomplete is not None:
        return _fragment_plausible(last_incomplete, clause, depth, schema)
    return PASS


# -- Scope ------------------------------------------------------------------


def _from_tables(partial: PartialParse) -> tuple[str, ...] | None:
    body = partial.completed.get(ClauseKind.FROM)
    if body is None:
        return None
    try:
        return parse_from_body(body).tables
    except ParseError:
        return None


def _collect_condition_refs(
    condition: Condition | None, out: list[tuple[ColumnRef, "frozenset[str] | None"]],
    extra_tables: frozenset[str] | None = None,
) -> None:
    if condition is None:
        return
    if isinstance(condition, BoolOp):
        for operand in condition.operands:
            _collect_condition_refs(operand, out, extra_tables)
        return
    predicate = condition
    for expr in (predicate.lhs,):
        if isinstance(expr, ColumnRef):
            out.append((expr, extra_tables))
        elif isinstance(expr, AggExpr) and isinstance(expr.arg, ColumnRef):
            out.append((expr.arg, extra_tables))
    rhs = predicate.rhs
    if isinstance(rhs, ColumnRef):
        out.append((rhs, extra_tables))
    elif isinstance(rhs, NormalizedQuery):
        sub_tables = frozenset(t.lower() for t in rhs.from_clause.tables)
        for item in rhs.select:
            if isinstance(item.expr, ColumnRef):
                out.append((item.expr, sub_tables))
            elif isinstance(item.expr, AggExpr) and isinstance(item.expr.arg, ColumnRef):
                out.append((item.expr.arg, sub_tables))
        for join in rhs.from_clause.joins:
            for a, b in join.conditions:
                out.append((a, sub_tables))
                out.append((b, sub_tables))
        _collect_condition_refs(rhs.where, out, sub_tables)


def _clause_refs(
    kind: ClauseKind, body: Sequence[str]
) -> list[tuple[ColumnRef, frozenset[str] | None]]:
    refs: list[tuple[ColumnRef, frozenset[str] | None]] = []
    try:
        if kind is ClauseKind.SELECT:
            _, items = parse_select_body(body)
            for item in items:
                if isinstance(item.expr, ColumnRef):
                    refs.append((item.expr, None))
                elif isinstance(item.expr, AggExpr) and isinstance(
                    item.expr.arg, ColumnRef
                ):
                    refs.append((item.expr.arg, None))
        elif kind is ClauseKind.FROM:
            clause = parse_from_body(body)
            for join in clause.joins:
                for a, b in join.conditions:
                    refs.append((a, None))
                    refs.append((b, None))
        elif kind in (ClauseKind.WHERE, ClauseKind.HAVING):
            condition = parse_condition_body(body, clause=kind.value)
            _collect_condition_refs(condition, refs)
        elif kind is ClauseKind.GROUP_BY:
            for column in parse_group_body(body):
                refs.append((column, None))
        elif kind is ClauseKind.ORDER_BY:
            for item in parse_order_body(body):
                if isinstance(item.expr, ColumnRef):
                    refs.append((item.expr, None))
                elif isinstance(item.expr, AggExpr) and isinstance(
                    item.expr.arg, ColumnRef
                ):
                    refs.append((item.expr.arg, None))
    except ParseError:
        return []  # malformed bodies are the syntax checks' problem
    return refs


_SCOPED_CLAUSES = (
    ClauseKind.SELECT,
    ClauseKind.FROM,
    ClauseKind.WHERE,
    ClauseKind.GROUP_BY,
    ClauseKind.HAVING,
    ClauseKind.ORDER_BY,
)


@dataclass
class _ParenContext:
    seen_first: bool = False
    is_subquery: bool = False
    after_from: bool = False
    expect_table: bool = False
    tables: set[str] = field(default_factory=set)


def _scan_partial_scope(
    kind: ClauseKind, lexemes: Sequence[str], outer: frozenset[str]
) -> CheckVerdict:
    """Eagerly scope-check an unterminated clause body.

    Deferred cases (subquery output columns before the subquery's FROM
    is visible) are skipped; the AST walk re-checks everything when the
    line terminates.
    """
    stack: list[_ParenContext] = []
    for lexeme in lexemes:
        if lexeme == "(":
            stack.append(_ParenContext())
            continue
        if lexeme == ")":
            if stack:
                stack.pop()
            continue
        if stack and not stack[-1].seen_first:
            stack[-1].seen_first = True
            if lexeme == "SELECT":
                stack[-1].is_subquery = True
                continue
        subquery = next((c for c in reversed(stack) if c.is_subquery), None)
        if subquery is not None:
            if lexeme == "FROM":
                subquery.after_from = True
                subquery.expect_table = True
                continue
            if lexeme == "JOIN":
                subquery.expect_table = True
                continue
            if subquery.expect_table and is_identifier(lexeme):
                subquery.tables.add(lexeme.lower())
                subquery.expect_table = False
                continue
        if is_column_ref(lexeme):
            table = lexeme.split(".", 1)[0].lower()
            if subquery is not None:
                if not subquery.after_from:
                    continue  # output column of a subquery still being typed
                if table not in subquery.tables | outer:
                    return CheckVerdict.rejected(
                        ErrorKind.RUNTIME,
                        kind,
                        f"table {table!r} not in the subquery's FROM",
                    )
            elif table not in outer:
                return CheckVerdict.rejected(
                    ErrorKind.RUNTIME, kind, f"table {table!r} not in FROM"
                )
    return PASS


def check_scope(query_so_far: PartialParse) -> CheckVerdict:
    """Reject column references whose table is absent from FROM.

    Inert until the FROM clause is terminated; afterwards completed
    clauses are checked via their parsed structure and the current
    clause body is scanned eagerly.
    """
    tables = _from_tables(query_so_far)
    if tables is None:
        return PASS
    outer = frozenset(t.lower() for t in tables)
    for kind in _SCOPED_CLAUSES:
        body = query_so_far.completed.get(kind)
        if body is None:
            continue
        for ref, local in _clause_refs(kind, body):
            allowed = outer if local is None else local | outer
            if ref.table.lower() not in allowed:
                return CheckVerdict.rejected(
                    ErrorKind.RUNTIME,
                    kind,
                    f"table {ref.table!r} not in FROM",
                )
    current = query_so_far.current_clause
    if current in (
        ClauseKind.WHERE,
        ClauseKind.GROUP_BY,
        ClauseKind.HAVING,
        ClauseKind.ORDER_BY,
    ):
        return _scan_partial_scope(current, query_so_far.current_body, outer)
    return PASS


# -- Types ------------------------------------------------------------------


def _compatible(computed: frozenset[ColumnType], example: ColumnType) -> bool:
    if ColumnType.OTHER in computed or example is ColumnType.OTHER:
        return True
    if example in NUMERIC_TYPES:
        return bool(computed & (NUMERIC_TYPES | {ColumnType.BOOLEAN}))
    if example is ColumnType.TEXT:
        return bool(computed & {ColumnType.TEXT, ColumnType.BOOLEAN})
    if example is ColumnType.BOOLEAN:
        return bool(
            computed & {ColumnType.BOOLEAN, ColumnType.INTEGER, ColumnType.TEXT}
        )
    return example in computed


def _column_type_set(
    schema: DatabaseSchema, ref: ColumnRef
) -> frozenset[ColumnType]:
    kind = schema.column_type(ref.table, ref.column)
    return frozenset({kind}) if kind is not None else frozenset({ColumnType.OTHER})


def _item_types(
    item: SelectItem,
    schema: DatabaseSchema,
    from_tables: Sequence[str] | None,
) -> list[frozenset[ColumnType]] | None:
    """Output type sets produced by one select item; None defers."""
    expr = item.expr
    if isinstance(expr, Star):
        if from_tables is None:
            return None
        types: list[frozenset[ColumnType]] = []
        for name in from_tables:
            table = schema.table(name)
            if table is None:
                return None
            types.extend(frozenset({column.type}) for column in table.columns)
        return types
    if isinstance(expr, ColumnRef):
        return [_column_type_set(schema, expr)]
    if isinstance(expr, AggExpr):
        if expr.func == "COUNT":
            return [frozenset({ColumnType.INTEGER})]
        if expr.func == "AVG":
            return [frozenset({ColumnType.REAL})]
        if expr.func == "SUM":
            return [NUMERIC_TYPES]
        assert isinstance(expr.arg, ColumnRef)
        return [_column_type_set(schema, expr.arg)]
    raise TypeError(f"unexpected select item {item!r}")


def check_types(
    select_items: Sequence[SelectItem],
    schema: DatabaseSchema,
    example: ExampleTuple,
    from_tables: Sequence[str] | None = None,
) -> CheckVerdict:
    """Compare the completed SELECT clause's output types to the example.

    Star items need the FROM table list to expand; when it is not yet
    known the whole check defers (a star changes the arity).
    """
    computed: list[frozenset[ColumnType]] = []
    for item in select_items:
        types = _item_types(item, schema, from_tables)
        if types is None:
            return PASS
        computed.extend(types)
    if len(computed) != example.arity:
        return CheckVerdict.rejected(
            ErrorKind.EXAMPLE,
            ClauseKind.SELECT,
            f"query returns {len(computed)} columns, example has {example.arity}",
        )
    for position, (types, expected) in enumerate(zip(computed, example.types)):
        if not _compatible(types, expected):
            names = "/".join(sorted(t.value for t in types))
            return CheckVerdict.rejected(
                ErrorKind.EXAMPLE,
                ClauseKind.SELECT,
                f"column {position + 1} yields {names}, example has {expected.value}",
            )
    return PASS


# -- Orchestration ----------------------------------------------------------


def check_partial(
    partial: PartialParse,
    schema: DatabaseSchema,
    example: ExampleTuple | None = None,
) -> CheckVerdict:
    """Run vocabulary, structure, scope and type checks on a partial."""
    if partial.syntax_error is not None:
        return CheckVerdict.rejected(
            ErrorKind.SYNTAX, partial.current_clause, partial.syntax_error
        )
    for kind, body in partial.completed.items():
        verdict = check_vocabulary(kind, body, None, schema)
        if not verdict.ok:
            return verdict
        error = validate_clause_body(kind, body)
        if error is not None:
            return CheckVerdict.rejected(ErrorKind.SYNTAX, kind, error)
    current = partial.current_clause
    if current is not None:
        if partial.keyword_remaining:
            fragment = partial.fragment
            if fragment is not None and not partial.keyword_remaining[0].startswith(
                fragment
            ):
                return CheckVerdict.rejected(
                    ErrorKind.SYNTAX,
                    current,
                    f"{fragment!r} cannot start the {current.value} line",
                )
        else:
            verdict = check_vocabulary(
                current, partial.current_body, partial.fragment, schema
            )
            if not verdict.ok:
                return verdict
    verdict = check_scope(partial)
    if not verdict.ok:
        return verdict
    if example is not None and ClauseKind.SELECT in partial.completed:
        try:
            _, items = parse_select_body(partial.completed[ClauseKind.SELECT])
        except ParseError:
            items = ()
        if items:
            verdict = check_types(
                items, schema, example, from_tables=_from_tables(partial)
            )
            if not verdict.ok:
                return verdict
    if partial.eos_seen and not partial.all_terminated:
        return CheckVerdict.rejected(
            ErrorKind.SYNTAX, current, "generation ended before the LIMIT line"
        )
    return PASS


def make_checker(
    schema: DatabaseSchema, example: ExampleTuple | None
) -> Callable[[str, bool], CheckVerdict]:
    """Bind schema and example into a text-level checking function."""

    def check(text: str, eos_seen: bool) -> CheckVerdict:
        try:
            partial = parse_partial(text, eos_seen=eos_seen)
        except ClauseOrderViolation as exc:
            return CheckVerdict.rejected(ErrorKind.SYNTAX, None, str(exc))
        return check_partial(partial, schema, example)

    return check


# -- 4-label classification -------------------------------------------------


class Label(enum.Enum):
    CORRECT = "Correct"
    EXAMPLE_ERROR = "ExampleError"
    RUNTIME_ERROR = "RuntimeError"
    SYNTAX_ERROR = "SyntaxError"


_KIND_TO_LABEL = {
    ErrorKind.SYNTAX: Label.SYNTAX_ERROR,
    ErrorKind.RUNTIME: Label.RUNTIME_ERROR,
    ErrorKind.EXAMPLE: Label.EXAMPLE_ERROR,
}


def predict_label(
    text: str, schema: DatabaseSchema, example: ExampleTuple | None
) -> Label:
    """Label a complete query using static checks only."""
    verdict = make_checker(schema, example)(text, True)
    if verdict.ok:
        return Label.CORRECT
    assert verdict.kind is not None
    return _KIND_TO_LABEL[verdict.kind]
