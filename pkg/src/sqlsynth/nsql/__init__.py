"""Canonical SQL dialect: grammar, parsing, rendering, normalization."""

from .errors import (
    AmbiguousColumn,
    ClauseOrderViolation,
    NormalizationError,
    ParseError,
    SelfJoinUnsupported,
    SetOperationUnsupported,
    SqlError,
    UnknownName,
)
from .grammar import parse_complete, validate_clause_body
from .lexemes import (
    AGGREGATIONS,
    COMPARISONS,
    CONNECTIVES,
    is_column_ref,
    is_constant,
    is_number,
    is_string_const,
    split_line,
)
from .normalize import normalize, rewrite_dataset
from .partial import PartialParse, parse_partial
from .query import (
    AggExpr,
    BoolOp,
    CLAUSE_ORDER,
    ClauseKind,
    ColumnRef,
    Condition,
    Constant,
    FromClause,
    JoinEdge,
    NormalizedQuery,
    OrderItem,
    Predicate,
    SelectItem,
    Star,
    denormalize_text,
    exact_match,
    query_skeleton,
)

__all__ = [
    "AGGREGATIONS",
    "AggExpr",
    "AmbiguousColumn",
    "BoolOp",
    "CLAUSE_ORDER",
    "COMPARISONS",
    "CONNECTIVES",
    "ClauseKind",
    "ClauseOrderViolation",
    "ColumnRef",
    "Condition",
    "Constant",
    "FromClause",
    "JoinEdge",
    "NormalizationError",
    "NormalizedQuery",
    "OrderItem",
    "ParseError",
    "PartialParse",
    "Predicate",
    "SelectItem",
    "SelfJoinUnsupported",
    "SetOperationUnsupported",
    "SqlError",
    "Star",
    "UnknownName",
    "denormalize_text",
    "exact_match",
    "is_column_ref",
    "is_constant",
    "is_number",
    "is_string_const",
    "normalize",
    "parse_complete",
    "parse_partial",
    "query_skeleton",
    "rewrite_dataset",
    "split_line",
    "validate_clause_body",
]
