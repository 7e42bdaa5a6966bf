"""Batch evaluation: benchmark runs, ablations, and checker comparison.

A benchmark run drives the search once per task and grades the result
two ways: execution accuracy (the found query's rows match the gold
query's rows) and exact match (identical canonical structure).  The
ablation driver repeats a run over every combination of the four
feature switches.  The checker comparison collects finished generations
with checks disabled and labels each one twice, statically and by
execution, to measure how often the static verdict agrees.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import closing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .checker import Label, predict_label
from .nsql.errors import SqlError
from .nsql.grammar import parse_complete
from .nsql.normalize import normalize
from .nsql.query import NormalizedQuery, exact_match
from .repair import execute_query, label_by_execution, rows_match
from .search import (
    AttemptMode,
    CompletionModel,
    SearchConfig,
    SearchStatus,
    collect_complete,
    run_search,
)
from .tasks import (
    DatabaseSchema,
    TaskInstance,
    open_database,
    serialize_task,
)


@dataclass(frozen=True)
class TaskReport:
    task_id: str
    db_id: str
    status: str
    solved: bool
    execution_match: bool | None
    exact: bool | None
    repaired: bool
    query_text: str | None
    elapsed_seconds: float
    stats: Mapping[str, object]
    note: str = ""

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _rate(hits: int, total: int) -> str:
    if total == 0:
        return "n/a"
    return f"{hits / total:.3f}"


@dataclass
class BenchmarkReport:
    label: str
    reports: list[TaskReport] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.reports)

    @property
    def solved(self) -> int:
        return sum(report.solved for report in self.reports)

    @property
    def execution_matches(self) -> int:
        return sum(bool(report.execution_match) for report in self.reports)

    @property
    def exact_matches(self) -> int:
        return sum(bool(report.exact) for report in self.reports)

    def mean_stat(self, key: str) -> float | None:
        values = [
            report.stats[key]
            for report in self.reports
            if isinstance(report.stats.get(key), (int, float))
        ]
        if not values:
            return None
        return sum(values) / len(values)

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "total": self.total,
            "solved": self.solved,
            "execution_matches": self.execution_matches,
            "exact_matches": self.exact_matches,
            "mean_nodes_expanded": self.mean_stat("nodes_expanded"),
            "mean_elapsed_seconds": self.mean_stat("elapsed_seconds"),
            "tasks": [report.as_dict() for report in self.reports],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    def render_text(self) -> str:
        lines = [
            f"run: {self.label}",
            f"tasks: {self.total}",
            f"solved: {self.solved} ({_rate(self.solved, self.total)})",
            "execution accuracy: "
            f"{self.execution_matches} ({_rate(self.execution_matches, self.total)})",
            f"exact match: {self.exact_matches} ({_rate(self.exact_matches, self.total)})",
        ]
        mean_nodes = self.mean_stat("nodes_expanded")
        if mean_nodes is not None:
            lines.append(f"mean nodes expanded: {mean_nodes:.1f}")
        header = f"{'task':<24} {'status':<16} {'exec':<5} {'exact':<5} note"
        lines.append(header)
        lines.append("-" * len(header))
        for report in self.reports:
            lines.append(
                f"{report.task_id:<24} {report.status:<16} "
                f"{_flag(report.execution_match):<5} {_flag(report.exact):<5} "
                f"{report.note}"
            )
        return "\n".join(lines)


def _flag(value: bool | None) -> str:
    if value is None:
        return "n/a"
    return "yes" if value else "no"


def _normalized_gold(task: TaskInstance, schema: DatabaseSchema) -> NormalizedQuery:
    try:
        return parse_complete(task.gold_query)
    except SqlError:
        return normalize(task.gold_query, schema)


def _grade_task(
    task: TaskInstance,
    schema: DatabaseSchema,
    db_root: Path | str,
    model: CompletionModel,
    config: SearchConfig,
) -> TaskReport:
    db = open_database(db_root, task.db_id)
    started = time.monotonic()
    try:
        result = run_search(task, schema, db, model, config=config)
    except Exception as exc:  # a task failure must not sink the batch
        return TaskReport(
            task_id=task.id,
            db_id=task.db_id,
            status="error",
            solved=False,
            execution_match=None,
            exact=None,
            repaired=False,
            query_text=None,
            elapsed_seconds=time.monotonic() - started,
            stats={},
            note=f"{type(exc).__name__}: {exc}",
        )
    solved = result.status is SearchStatus.SOLVED
    execution = None
    exact = None
    note = ""
    if not task.gold_query:
        note = "no gold query"
    else:
        try:
            gold = _normalized_gold(task, schema)
        except SqlError as exc:
            gold = None
            note = f"gold not normalizable: {exc}"
        if gold is not None and solved and result.query is not None:
            exact = exact_match(result.query, gold)
            execution = _execution_match(db, result.query, gold)
        elif gold is not None:
            exact = False
            execution = False
    return TaskReport(
        task_id=task.id,
        db_id=task.db_id,
        status=result.status.value,
        solved=solved,
        execution_match=execution,
        exact=exact,
        repaired=result.repaired,
        query_text=result.query_text,
        elapsed_seconds=result.stats.elapsed_seconds,
        stats=result.stats.as_dict(),
        note=note,
    )


def _execution_match(
    db, found: NormalizedQuery, gold: NormalizedQuery
) -> bool | None:
    with closing(db.connect()) as conn:
        gold_result = execute_query(conn, gold, timeout=5.0)
        found_result = execute_query(conn, found, timeout=5.0)
    if not gold_result.ok or not found_result.ok:
        return None
    ordered = bool(gold.order_by)
    return rows_match(found_result.rows, gold_result.rows, ordered=ordered)


def run_benchmark(
    tasks: Sequence[TaskInstance],
    schemas: Mapping[str, DatabaseSchema],
    db_root: Path | str,
    model: CompletionModel,
    *,
    config: SearchConfig | None = None,
    jobs: int = 1,
    label: str = "benchmark",
) -> BenchmarkReport:
    """Search every task and grade the answers against gold queries.

    With ``jobs`` above one, tasks run on a thread pool; each worker
    opens its own database handle so SQLite stays on one thread.
    """
    config = config or SearchConfig()
    report = BenchmarkReport(label=label)
    if jobs <= 1:
        for task in tasks:
            report.reports.append(
                _grade_task(task, schemas[task.db_id], db_root, model, config)
            )
        return report
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(_grade_task, task, schemas[task.db_id], db_root, model, config)
            for task in tasks
        ]
        report.reports.extend(future.result() for future in futures)
    return report


def ablation_grid() -> list[SearchConfig]:
    """Every combination of the four feature switches."""
    configs = []
    for mode in (AttemptMode.MULTIPLE, AttemptMode.SINGLE):
        for pqc in (True, False):
            for repair in (True, False):
                for examples in (True, False):
                    configs.append(
                        SearchConfig(
                            attempt_mode=mode,
                            pqc_enabled=pqc,
                            repair_enabled=repair,
                            include_examples=examples,
                        )
                    )
    return configs


def config_label(config: SearchConfig) -> str:
    def onoff(flag: bool) -> str:
        return "on" if flag else "off"

    return (
        f"mode={config.attempt_mode.value},pqc={onoff(config.pqc_enabled)},"
        f"repair={onoff(config.repair_enabled)},"
        f"examples={onoff(config.include_examples)}"
    )


def run_ablation(
    tasks: Sequence[TaskInstance],
    schemas: Mapping[str, DatabaseSchema],
    db_root: Path | str,
    model: CompletionModel,
    *,
    base_config: SearchConfig | None = None,
    jobs: int = 1,
) -> list[BenchmarkReport]:
    base = base_config or SearchConfig()
    runs = []
    for grid_config in ablation_grid():
        config = dataclasses.replace(
            base,
            attempt_mode=grid_config.attempt_mode,
            pqc_enabled=grid_config.pqc_enabled,
            repair_enabled=grid_config.repair_enabled,
            include_examples=grid_config.include_examples,
        )
        runs.append(
            run_benchmark(
                tasks,
                schemas,
                db_root,
                model,
                config=config,
                jobs=jobs,
                label=config_label(config),
            )
        )
    return runs


# -- Checker comparison ----------------------------------------------------

LABEL_ORDER = (
    Label.CORRECT,
    Label.EXAMPLE_ERROR,
    Label.RUNTIME_ERROR,
    Label.SYNTAX_ERROR,
)


@dataclass
class CheckerExperiment:
    """Executed-vs-predicted label counts over collected generations."""

    matrix: dict[Label, dict[Label, int]] = field(
        default_factory=lambda: {
            truth: {predicted: 0 for predicted in LABEL_ORDER}
            for truth in LABEL_ORDER
        }
    )
    samples: list[tuple[str, Label, Label]] = field(default_factory=list)

    def record(self, text: str, truth: Label, predicted: Label) -> None:
        self.matrix[truth][predicted] += 1
        self.samples.append((text, truth, predicted))

    @property
    def total(self) -> int:
        return len(self.samples)

    @property
    def agreements(self) -> int:
        return sum(self.matrix[label][label] for label in LABEL_ORDER)

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "agreements": self.agreements,
            "agreement_rate": (
                self.agreements / self.total if self.total else None
            ),
            "matrix": {
                truth.value: {
                    predicted.value: self.matrix[truth][predicted]
                    for predicted in LABEL_ORDER
                }
                for truth in LABEL_ORDER
            },
        }

    def render_text(self) -> str:
        width = max(len(label.value) for label in LABEL_ORDER) + 2
        lines = [
            f"generations labeled: {self.total}",
            f"agreement: {self.agreements} ({_rate(self.agreements, self.total)})",
            "rows: by execution, columns: by static checks",
            " " * width
            + "".join(f"{label.value:>{width}}" for label in LABEL_ORDER),
        ]
        for truth in LABEL_ORDER:
            cells = "".join(
                f"{self.matrix[truth][predicted]:>{width}}"
                for predicted in LABEL_ORDER
            )
            lines.append(f"{truth.value:<{width}}" + cells)
        return "\n".join(lines)


def run_checker_experiment(
    tasks: Sequence[TaskInstance],
    schemas: Mapping[str, DatabaseSchema],
    db_root: Path | str,
    model: CompletionModel,
    *,
    per_task: int = 4,
    config: SearchConfig | None = None,
) -> CheckerExperiment:
    """Label the top finished generations statically and by execution.

    Generations are collected with pruning disabled so the static
    checker is judged on raw model output.  Ground truth for result
    mismatches comes from each task's gold query.
    """
    config = dataclasses.replace(config or SearchConfig(), pqc_enabled=False)
    experiment = CheckerExperiment()
    for task in tasks:
        schema = schemas[task.db_id]
        examples = tuple(task.sorted_examples())
        example = examples[0] if examples else None
        task_text = serialize_task(task, schema)
        texts = collect_complete(task_text, model, per_task, config)
        db = open_database(db_root, task.db_id)
        with closing(db.connect()) as conn:
            gold_rows = None
            if task.gold_query:
                try:
                    gold = _normalized_gold(task, schema)
                    gold_result = execute_query(conn, gold, timeout=5.0)
                    if gold_result.ok:
                        gold_rows = gold_result.rows
                except SqlError:
                    gold_rows = None
            for text in texts:
                predicted = predict_label(text, schema, example)
                truth = label_by_execution(
                    text, conn, gold_rows=gold_rows, examples=examples
                )
                experiment.record(text, truth, predicted)
    return experiment
