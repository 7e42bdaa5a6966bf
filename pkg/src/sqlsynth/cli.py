"""Command-line front end.

Subcommands cover the main workflows: solve one task (``generate``),
score a dataset (``bench``), sweep the feature switches (``ablate``),
rewrite gold queries into canonical form (``normalize``), and compare
static labels against execution labels (``checker-exp``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bench import (
    run_ablation,
    run_benchmark,
    run_checker_experiment,
)
from .lm import AdapterError, HttpCompletionModel, load_scripted_model
from .nsql.errors import SqlError
from .nsql.normalize import normalize, rewrite_dataset
from .search import AttemptMode, SearchConfig, run_search
from .tasks import (
    DatasetError,
    ExampleTuple,
    TaskInstance,
    dump_tasks,
    load_schemas,
    load_tasks,
    open_database,
)


class CliError(Exception):
    """Bad command-line input; maps to exit code 2."""


def _build_model(spec: str):
    if spec.startswith("scripted:"):
        path = Path(spec[len("scripted:") :])
        if not path.exists():
            raise CliError(f"scripted model file not found: {path}")
        return load_scripted_model(path)
    if spec.startswith(("http://", "https://")):
        token = os.environ.get("SQLSYNTH_HTTP_TOKEN")
        return HttpCompletionModel(spec, auth_token=token)
    raise CliError(
        f"unrecognized model spec {spec!r}; use scripted:<path> or an http(s) URL"
    )


def _build_config(args: argparse.Namespace) -> SearchConfig:
    return SearchConfig(
        k=args.k,
        time_limit=args.time_limit,
        max_tokens=args.max_tokens,
        attempt_mode=AttemptMode(args.mode),
        pqc_enabled=not args.no_pqc,
        repair_enabled=not args.no_repair,
        include_examples=not args.no_examples,
    )


def _add_search_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, help="scripted:<path> or http(s) URL")
    parser.add_argument("--k", type=int, default=5, help="continuations per expansion")
    parser.add_argument("--time-limit", type=float, default=60.0)
    parser.add_argument("--max-tokens", type=int, default=128)
    parser.add_argument(
        "--mode", choices=[mode.value for mode in AttemptMode], default="multiple"
    )
    parser.add_argument("--no-pqc", action="store_true", help="disable static pruning")
    parser.add_argument("--no-repair", action="store_true", help="disable repair")
    parser.add_argument(
        "--no-examples", action="store_true", help="hide example tuples from the model"
    )


def _add_dataset_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tables", required=True, help="schema file (tables.json)")
    parser.add_argument("--tasks", required=True, help="task dataset file")
    parser.add_argument("--db-root", required=True, help="directory of SQLite files")
    parser.add_argument("--limit", type=int, default=None, help="use only the first N tasks")


def _load_dataset(args: argparse.Namespace):
    schemas = load_schemas(args.tables)
    tasks = load_tasks(args.tasks, schemas)
    if args.limit is not None:
        tasks = tasks[: args.limit]
    return schemas, tasks


def _parse_example(raw: str) -> ExampleTuple:
    try:
        values = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CliError(f"example is not valid JSON: {exc}") from None
    if not isinstance(values, list) or not values:
        raise CliError("example must be a non-empty JSON array")
    return ExampleTuple.from_values(values)


def _cmd_generate(args: argparse.Namespace) -> int:
    schemas = load_schemas(args.tables)
    if args.db_id not in schemas:
        raise CliError(f"unknown database id {args.db_id!r}")
    examples = frozenset(_parse_example(raw) for raw in args.example or [])
    task = TaskInstance(
        id=f"{args.db_id}-cli",
        db_id=args.db_id,
        question=args.question,
        gold_query=args.gold or "",
        examples=examples,
    )
    model = _build_model(args.model)
    db = open_database(args.db_root, args.db_id)
    result = run_search(
        task, schemas[args.db_id], db, model, config=_build_config(args)
    )
    payload = {
        "status": result.status.value,
        "query": result.query_text,
        "repaired": result.repaired,
        "rows": [list(row) for row in result.execution.rows]
        if result.execution is not None and result.execution.ok
        else None,
        "stats": result.stats.as_dict(),
    }
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    schemas, tasks = _load_dataset(args)
    model = _build_model(args.model)
    report = run_benchmark(
        tasks,
        schemas,
        args.db_root,
        model,
        config=_build_config(args),
        jobs=args.jobs,
    )
    print(report.render_text())
    if args.output:
        Path(args.output).write_text(report.to_json())
        print(f"wrote {args.output}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    schemas, tasks = _load_dataset(args)
    model = _build_model(args.model)
    runs = run_ablation(
        tasks,
        schemas,
        args.db_root,
        model,
        base_config=_build_config(args),
        jobs=args.jobs,
    )
    width = max(len(run.label) for run in runs)
    for run in runs:
        print(
            f"{run.label:<{width}}  solved {run.solved}/{run.total}  "
            f"exec {run.execution_matches}/{run.total}  "
            f"exact {run.exact_matches}/{run.total}"
        )
    if args.output:
        payload = [run.as_dict() for run in runs]
        Path(args.output).write_text(json.dumps(payload, indent=2))
        print(f"wrote {args.output}")
    return 0


def _cmd_normalize(args: argparse.Namespace) -> int:
    schemas = load_schemas(args.tables)
    if args.sql is not None:
        if not args.db_id:
            raise CliError("--sql needs --db-id")
        if args.db_id not in schemas:
            raise CliError(f"unknown database id {args.db_id!r}")
        try:
            print(normalize(args.sql, schemas[args.db_id]).render(), end="")
        except SqlError as exc:
            print(f"rejected: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        return 0
    if not args.tasks:
        raise CliError("provide --tasks or --sql")
    tasks = load_tasks(args.tasks, schemas)
    kept, rejected = rewrite_dataset(tasks, schemas)
    if args.output:
        Path(args.output).write_text(json.dumps(dump_tasks(kept), indent=2))
    print(f"normalized {len(kept)} tasks, rejected {len(rejected)}")
    for task, reason in rejected:
        print(f"  {task.id}: {reason}")
    return 0


def _cmd_checker_exp(args: argparse.Namespace) -> int:
    schemas, tasks = _load_dataset(args)
    model = _build_model(args.model)
    experiment = run_checker_experiment(
        tasks,
        schemas,
        args.db_root,
        model,
        per_task=args.per_task,
        config=_build_config(args),
    )
    print(experiment.render_text())
    if args.output:
        Path(args.output).write_text(json.dumps(experiment.as_dict(), indent=2))
        print(f"wrote {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqlsynth",
        description="Search-based SQL synthesis from questions and example rows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", help="solve a single task")
    generate.add_argument("--tables", required=True)
    generate.add_argument("--db-root", required=True)
    generate.add_argument("--db-id", required=True)
    generate.add_argument("--question", required=True)
    generate.add_argument(
        "--example",
        action="append",
        help="expected output row as a JSON array; repeatable",
    )
    generate.add_argument("--gold", help="reference query, used only for grading")
    _add_search_options(generate)
    generate.set_defaults(func=_cmd_generate)

    bench = sub.add_parser("bench", help="run a dataset and report accuracy")
    _add_dataset_options(bench)
    _add_search_options(bench)
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--output", help="write the full JSON report here")
    bench.set_defaults(func=_cmd_bench)

    ablate = sub.add_parser("ablate", help="sweep the feature switches")
    _add_dataset_options(ablate)
    _add_search_options(ablate)
    ablate.add_argument("--jobs", type=int, default=1)
    ablate.add_argument("--output", help="write all run reports as JSON")
    ablate.set_defaults(func=_cmd_ablate)

    norm = sub.add_parser("normalize", help="rewrite queries into canonical form")
    norm.add_argument("--tables", required=True)
    norm.add_argument("--tasks", help="dataset whose gold queries to rewrite")
    norm.add_argument("--output", help="write the rewritten dataset here")
    norm.add_argument("--sql", help="normalize one statement instead")
    norm.add_argument("--db-id", help="database for --sql")
    norm.set_defaults(func=_cmd_normalize)

    exp = sub.add_parser(
        "checker-exp", help="compare static labels with execution labels"
    )
    _add_dataset_options(exp)
    _add_search_options(exp)
    exp.add_argument("--per-task", type=int, default=4)
    exp.add_argument("--output", help="write the matrix as JSON")
    exp.set_defaults(func=_cmd_checker_exp)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AdapterError as exc:
        print(f"model adapter error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
