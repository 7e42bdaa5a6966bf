"""Task model: schemas, databases, tasks and example tuples.

Loads Spider-format ``tables.json`` and task files, opens the SQLite
database behind each task read-only, derives example tuples from gold
queries, and serializes the task description consumed by the language
model adapters.
"""

from __future__ import annotations

import enum
import json
import sqlite3
from contextlib import closing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class DatasetError(Exception):
    """A dataset file is malformed or internally inconsistent."""


class DuplicateDbId(DatasetError):
    """Two schema entries share the same db_id."""


class UnknownDbId(DatasetError):
    """A task record names a db_id with no loaded schema."""


class EmptyResult(Exception):
    """A gold query returned no rows, so no example can be derived."""


class ExecutionError(Exception):
    """A gold query failed to execute while deriving an example."""


class ColumnType(enum.Enum):
    INTEGER = "Integer"
    REAL = "Real"
    TEXT = "Text"
    BOOLEAN = "Boolean"
    OTHER = "Other"


NUMERIC_TYPES = frozenset({ColumnType.INTEGER, ColumnType.REAL})

_SPIDER_TYPE_MAP = {
    "number": ColumnType.INTEGER,  # provisional; refine_schema may widen to Real
    "text": ColumnType.TEXT,
    "boolean": ColumnType.BOOLEAN,
}


def value_type(value: object) -> ColumnType:
    if isinstance(value, bool):
        return ColumnType.BOOLEAN
    if isinstance(value, int):
        return ColumnType.INTEGER
    if isinstance(value, float):
        return ColumnType.REAL
    if isinstance(value, str):
        return ColumnType.TEXT
    return ColumnType.OTHER


@dataclass(frozen=True)
class Column:
    name: str
    type: ColumnType


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]

    def column(self, name: str) -> Column | None:
        lowered = name.lower()
        for column in self.columns:
            if column.name.lower() == lowered:
                return column
        return None


@dataclass(frozen=True)
class DatabaseSchema:
    db_id: str
    tables: tuple[Table, ...]
    foreign_keys: tuple[tuple[str, str], ...] = ()

    def table(self, name: str) -> Table | None:
        lowered = name.lower()
        for table in self.tables:
            if table.name.lower() == lowered:
                return table
        return None

    def column_type(self, table: str, column: str) -> ColumnType | None:
        owner = self.table(table)
        if owner is None:
            return None
        found = owner.column(column)
        return found.type if found else None

    def column_refs(self) -> tuple[str, ...]:
        """All ``table.column`` lexemes in declaration order."""
        refs = []
        for table in self.tables:
            for column in table.columns:
                refs.append(f"{table.name}.{column.name}")
        return tuple(refs)


@dataclass(frozen=True)
class ExampleTuple:
    """One output tuple the synthesized query must return."""

    entries: tuple[tuple[object, ColumnType], ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise DatasetError("example tuples must have arity >= 1")

    @classmethod
    def from_values(cls, values: Sequence[object]) -> ExampleTuple:
        return cls(tuple((value, value_type(value)) for value in values))

    @property
    def values(self) -> tuple[object, ...]:
        return tuple(value for value, _ in self.entries)

    @property
    def types(self) -> tuple[ColumnType, ...]:
        return tuple(kind for _, kind in self.entries)

    @property
    def arity(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class TaskInstance:
    id: str
    db_id: str
    question: str
    gold_query: str | None = None
    examples: frozenset[ExampleTuple] = frozenset()

    def __post_init__(self) -> None:
        _check_example_consistency(self.examples)

    def sorted_examples(self) -> tuple[ExampleTuple, ...]:
        return tuple(sorted(self.examples, key=lambda t: tuple(map(repr, t.values))))


def _check_example_consistency(examples: Iterable[ExampleTuple]) -> None:
    arity: int | None = None
    types: tuple[ColumnType, ...] | None = None
    for example in examples:
        if arity is None:
            arity, types = example.arity, example.types
            continue
        if example.arity != arity:
            raise DatasetError("example tuples disagree on arity")
        assert types is not None
        for left, right in zip(types, example.types):
            if ColumnType.OTHER in (left, right):
                continue
            if left is not right:
                raise DatasetError("example tuples disagree on column types")


@dataclass(frozen=True)
class TaskDatabase:
    """Locator for a task's SQLite file; every user opens its own
    read-only connection so handles are never shared across threads."""

    db_id: str
    path: Path

    def connect(self) -> sqlite3.Connection:
        uri = f"file:{self.path}?mode=ro"
        return sqlite3.connect(uri, uri=True)


# -- Loading ----------------------------------------------------------------


def load_schemas(tables_file: Path | str) -> dict[str, DatabaseSchema]:
    try:
        data = json.loads(Path(tables_file).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read schema file: {exc}") from exc
    if not isinstance(data, list):
        raise DatasetError("schema file must contain a list of database entries")
    schemas: dict[str, DatabaseSchema] = {}
    for entry in data:
        schema = _schema_from_entry(entry)
        if schema.db_id in schemas:
            raise DuplicateDbId(schema.db_id)
        schemas[schema.db_id] = schema
    return schemas


def _schema_from_entry(entry: Mapping) -> DatabaseSchema:
    try:
        db_id = entry["db_id"]
        table_names = entry.get("table_names_original") or entry.get("table_names") or []
        column_names = entry.get("column_names_original") or entry.get("column_names") or []
        column_types = entry.get("column_types", [])
    except (TypeError, KeyError) as exc:
        raise DatasetError(f"malformed schema entry: {exc}") from exc

    columns_by_table: dict[int, list[Column]] = {i: [] for i in range(len(table_names))}
    flat_refs: list[str | None] = []
    for index, item in enumerate(column_names):
        table_index, name = item
        if table_index < 0:
            flat_refs.append(None)  # the "*" pseudo-column
            continue
        type_name = column_types[index] if index < len(column_types) else "others"
        kind = _SPIDER_TYPE_MAP.get(str(type_name).lower(), ColumnType.OTHER)
        columns_by_table[table_index].append(Column(str(name).strip(), kind))
        flat_refs.append(f"{table_names[table_index]}.{str(name).strip()}")

    tables = tuple(
        Table(str(name).strip(), tuple(columns_by_table[i]))
        for i, name in enumerate(table_names)
    )
    _check_name_uniqueness(db_id, tables)

    foreign_keys = []
    for pair in entry.get("foreign_keys", []):
        refs = []
        for column_index in pair:
            if column_index >= len(flat_refs) or flat_refs[column_index] is None:
                raise DatasetError(f"{db_id}: foreign key names a missing column")
            refs.append(flat_refs[column_index])
        foreign_keys.append((refs[0], refs[1]))
    return DatabaseSchema(db_id, tables, tuple(foreign_keys))


def _check_name_uniqueness(db_id: str, tables: Sequence[Table]) -> None:
    seen_tables: set[str] = set()
    for table in tables:
        lowered = table.name.lower()
        if lowered in seen_tables:
            raise DatasetError(f"{db_id}: duplicate table name {table.name!r}")
        seen_tables.add(lowered)
        seen_columns: set[str] = set()
        for column in table.columns:
            if column.name.lower() in seen_columns:
                raise DatasetError(
                    f"{db_id}: duplicate column {table.name}.{column.name}"
                )
            seen_columns.add(column.name.lower())


def load_tasks(
    dataset_file: Path | str, schemas: Mapping[str, DatabaseSchema]
) -> list[TaskInstance]:
    try:
        records = json.loads(Path(dataset_file).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read task file: {exc}") from exc
    if not isinstance(records, list):
        raise DatasetError("task file must contain a list of records")
    tasks: list[TaskInstance] = []
    for index, record in enumerate(records):
        try:
            db_id = record["db_id"]
            question = record["question"]
        except (TypeError, KeyError) as exc:
            raise DatasetError(f"record {index}: missing field {exc}") from exc
        if db_id not in schemas:
            raise UnknownDbId(f"record {index}: unknown db_id {db_id!r}")
        examples = frozenset(
            ExampleTuple.from_values(row) for row in record.get("examples", [])
        )
        tasks.append(
            TaskInstance(
                id=str(record.get("id") or f"{db_id}-{index:04d}"),
                db_id=db_id,
                question=question,
                gold_query=record.get("query") or record.get("gold_query") or "",
                examples=examples,
            )
        )
    return tasks


def dump_tasks(tasks: Iterable[TaskInstance]) -> list[dict]:
    """Task records in the JSON shape load_tasks accepts."""
    records = []
    for task in tasks:
        records.append(
            {
                "id": task.id,
                "db_id": task.db_id,
                "question": task.question,
                "query": task.gold_query,
                "examples": [list(t.values) for t in task.sorted_examples()],
            }
        )
    return records


# -- Databases --------------------------------------------------------------


def database_path(db_root: Path | str, db_id: str) -> Path:
    return Path(db_root) / db_id / f"{db_id}.sqlite"


def open_database(db_root: Path | str, db_id: str) -> TaskDatabase:
    path = database_path(db_root, db_id)
    if not path.is_file():
        raise DatasetError(f"no database file at {path}")
    return TaskDatabase(db_id, path)


def derive_example(db: TaskDatabase, gold_query: str) -> ExampleTuple:
    """The first tuple of the gold query's result, under the query's own
    ordering; raises EmptyResult when the query returns no rows."""
    with closing(db.connect()) as connection:
        try:
            cursor = connection.execute(gold_query)
            row = cursor.fetchone()
        except sqlite3.Error as exc:
            raise ExecutionError(str(exc)) from exc
    if row is None:
        raise EmptyResult(gold_query)
    return ExampleTuple.from_values(tuple(row))


def validate_database(db: TaskDatabase, schema: DatabaseSchema) -> list[str]:
    """Check the live database agrees with the declared schema; returns
    a list of problems, empty when everything declared exists."""
    problems: list[str] = []
    with closing(db.connect()) as connection:
        for table in schema.tables:
            try:
                rows = connection.execute(
                    f'PRAGMA table_info("{table.name}")'
                ).fetchall()
            except sqlite3.Error as exc:
                problems.append(f"table {table.name}: {exc}")
                continue
            if not rows:
                problems.append(f"missing table {table.name}")
                continue
            live_columns = {str(row[1]).lower() for row in rows}
            for column in table.columns:
                if column.name.lower() not in live_columns:
                    problems.append(f"missing column {table.name}.{column.name}")
    return problems


def refine_schema(db: TaskDatabase, schema: DatabaseSchema) -> DatabaseSchema:
    """Widen provisional Integer columns to Real when stored values have
    fractional parts; Spider's type strings are too coarse to tell."""
    with closing(db.connect()) as connection:
        tables = []
        for table in schema.tables:
            columns = []
            for column in table.columns:
                kind = column.type
                if kind is ColumnType.INTEGER and _column_holds_reals(
                    connection, table.name, column.name
                ):
                    kind = ColumnType.REAL
                columns.append(Column(column.name, kind))
            tables.append(Table(table.name, tuple(columns)))
    return DatabaseSchema(schema.db_id, tuple(tables), schema.foreign_keys)


def _column_holds_reals(
    connection: sqlite3.Connection, table: str, column: str, sample: int = 100
) -> bool:
    try:
        rows = connection.execute(
            f'SELECT "{column}" FROM "{table}" WHERE "{column}" IS NOT NULL LIMIT ?',
            (sample,),
        ).fetchall()
    except sqlite3.Error:
        return False
    for (value,) in rows:
        if isinstance(value, float) and value != int(value):
            return True
    return False


# -- Serialization ----------------------------------------------------------

_SECTION_DELIMITER = "---"


def serialize_task(task: TaskInstance, schema: DatabaseSchema) -> str:
    """Deterministic text form of a task: question, schema, examples.

    Database contents never appear here; the model sees only the schema
    declaration and the example tuples.
    """
    lines = [task.question, _SECTION_DELIMITER]
    for table in schema.tables:
        columns = " , ".join(f"{c.name} : {c.type.value}" for c in table.columns)
        lines.append(f"{table.name} ( {columns} )")
    lines.append(_SECTION_DELIMITER)
    examples = task.sorted_examples()
    if examples:
        lines.extend(json.dumps(list(t.values), default=str) for t in examples)
    else:
        lines.append("no examples")
    return "\n".join(lines)
