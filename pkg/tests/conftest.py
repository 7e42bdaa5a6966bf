from __future__ import annotations

import sqlite3

import pytest

from sqlsynth.nsql.normalize import rewrite_dataset
from sqlsynth.tasks import (
    DatabaseSchema,
    TaskInstance,
    load_schemas,
    load_tasks,
    open_database,
    refine_schema,
)
from tests.fixtures.build import FixturePaths, write_fixture_tree


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory) -> FixturePaths:
    return write_fixture_tree(tmp_path_factory.mktemp("fixtures"))


@pytest.fixture(scope="session")
def raw_schemas(fixture_paths) -> dict[str, DatabaseSchema]:
    return load_schemas(fixture_paths.tables)


@pytest.fixture(scope="session")
def schemas(fixture_paths, raw_schemas) -> dict[str, DatabaseSchema]:
    return {
        db_id: refine_schema(open_database(fixture_paths.db_root, db_id), schema)
        for db_id, schema in raw_schemas.items()
    }


@pytest.fixture(scope="session")
def tasks(fixture_paths, schemas) -> list[TaskInstance]:
    return load_tasks(fixture_paths.tasks, schemas)


@pytest.fixture(scope="session")
def normalized_tasks(tasks, schemas) -> list[TaskInstance]:
    kept, rejected = rewrite_dataset(tasks, schemas)
    assert not rejected, f"fixture corpus must fully normalize: {rejected}"
    return kept


@pytest.fixture()
def connect(fixture_paths):
    """Open read-only fixture connections that close with the test."""
    opened: list[sqlite3.Connection] = []

    def _connect(db_id: str) -> sqlite3.Connection:
        conn = open_database(fixture_paths.db_root, db_id).connect()
        opened.append(conn)
        return conn

    yield _connect
    for conn in opened:
        conn.close()
