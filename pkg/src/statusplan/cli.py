"""Command-line frontend.

Exit codes: 0 plan found / plan valid, 1 unsolvable or invalid, 2 resource
limit, 3 input error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from statusplan.experiments import (
    GeneratorSpec,
    aggregates_to_json,
    generate,
    records_to_csv,
    run_suite,
)
from statusplan.model import ModelError, PlanningTask, tree_fail_count
from statusplan.process import compile_process, emit
from statusplan.search import (
    DEFAULT_STRONG_PHASE_BUDGET,
    DEFAULT_TIMEOUT,
    SearchConfig,
    SearchResult,
    solve,
    validate_plan,
)
from statusplan.task_io import (
    PddlError,
    SchemaError,
    compile_bundle,
    load_objects_file,
    load_problem_file,
    parse_pddl_files,
    plan_from_json,
    plan_to_json,
    read_task,
    task_to_json,
    write_task,
)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_RESOURCE = 2
EXIT_INPUT = 3

INPUT_ERRORS = (ModelError, SchemaError, PddlError, OSError, json.JSONDecodeError)


def load_task(inputs: tuple[str, ...]) -> PlanningTask:
    """One task JSON file, an objects+problem JSON pair, or a PDDL
    domain+problem pair (by .pddl extension)."""
    if len(inputs) == 1:
        return read_task(inputs[0])
    if len(inputs) == 2:
        if all(p.endswith(".pddl") for p in inputs):
            return parse_pddl_files(inputs[0], inputs[1])
        objects = load_objects_file(inputs[0])
        bundle = load_problem_file(inputs[1], objects)
        return compile_bundle(bundle)
    raise click.UsageError("expected TASK.json, OBJECTS.json PROBLEM.json, or DOMAIN.pddl PROBLEM.pddl")


def search_options(f):
    f = click.option("--mode", type=click.Choice(["strong", "weak", "auto"]), default="auto", show_default=True)(f)
    f = click.option("--heuristic", type=click.Choice(["ff", "blind"]), default="ff", show_default=True)(f)
    f = click.option("--weight", type=float, default=5.0, show_default=True, help="Multiplier on heuristic values.")(f)
    f = click.option("--no-helpful", is_flag=True, help="Disable helpful-actions pruning (enables unsolvability verdicts).")(f)
    f = click.option("--max-evals", type=int, default=None, help="Evaluation budget.")(f)
    f = click.option("--timeout", type=float, default=DEFAULT_TIMEOUT, show_default=True, help="Wall-clock budget in seconds.")(f)
    f = click.option("--strong-budget", type=float, default=DEFAULT_STRONG_PHASE_BUDGET, show_default=True, help="Strong-phase budget for auto mode.")(f)
    return f


def build_config(mode, heuristic, weight, no_helpful, max_evals, timeout, strong_budget) -> SearchConfig:
    return SearchConfig(
        mode=mode,
        heuristic=heuristic,
        weight=weight,
        helpful_pruning=not no_helpful,
        max_evaluations=max_evals,
        timeout=timeout,
        strong_phase_budget=strong_budget,
    )


def result_payload(task: PlanningTask, result: SearchResult) -> dict:
    payload = {
        "verdict": result.verdict,
        "mode_used": result.mode_used,
        "statistics": {
            "evaluations": result.stats.evaluations,
            "expansions": result.stats.expansions,
            "max_depth": result.stats.max_depth,
            "wall_time": result.stats.wall_time,
            "failed_leaves": result.stats.failed_leaves,
        },
    }
    if result.plan is not None:
        payload["plan"] = plan_to_json(task, result.plan)
        payload["process"] = json.loads(emit(compile_process(task, result.plan), "json"))
    if result.strong_phase is not None:
        payload["strong_phase"] = {
            "verdict": result.strong_phase.verdict,
            "evaluations": result.strong_phase.stats.evaluations,
        }
    return payload


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool):
    """Plan over business-object status models and compile process graphs."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING)


@main.command(name="solve")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@search_options
@click.option("--out", type=click.Choice(["json", "dot", "bpmn"]), default="json", show_default=True)
def solve_cmd(inputs, out, **options):
    """Find a plan and print it with its process graph."""
    try:
        task = load_task(inputs)
    except INPUT_ERRORS as err:
        click.echo(f"input error: {err}", err=True)
        sys.exit(EXIT_INPUT)
    result = solve(task, build_config(**options))
    if result.strong_phase is not None:
        click.echo(
            f"strong phase: {result.strong_phase.verdict} "
            f"({result.strong_phase.stats.evaluations} evaluations); "
            f"weak phase: {result.verdict}",
            err=True,
        )
    if result.verdict == "plan":
        if out == "json":
            click.echo(json.dumps(result_payload(task, result), indent=2))
        else:
            graph = compile_process(task, result.plan)
            click.echo(emit(graph, "dot" if out == "dot" else "bpmn_xml"))
        sys.exit(EXIT_OK)
    click.echo(f"verdict: {result.verdict}", err=True)
    sys.exit(EXIT_RESOURCE if result.verdict == "resource_limit" else EXIT_NEGATIVE)


@main.command(name="compile")
@click.argument("objects_file", type=click.Path(exists=True))
@click.argument("problem_file", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Write the task here instead of stdout.")
def compile_cmd(objects_file, problem_file, out):
    """Compile business objects plus a problem into a task file."""
    try:
        objects = load_objects_file(objects_file)
        bundle = load_problem_file(problem_file, objects)
        task = compile_bundle(bundle)
    except INPUT_ERRORS as err:
        click.echo(f"input error: {err}", err=True)
        sys.exit(EXIT_INPUT)
    if out:
        write_task(task, out)
    else:
        click.echo(json.dumps(task_to_json(task), indent=2))
    sys.exit(EXIT_OK)


@main.command(name="gen")
@click.argument("objects_file", type=click.Path(exists=True))
@click.option("--object", "object_id", default=None, help="Object id when the file has several.")
@click.option("--goal-size", type=int, required=True)
@click.option("--samples", type=int, default=None, help="Value tuples per variable subset (default: all).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scope", type=click.Choice(["full", "bo_relevant"]), default="full", show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
def gen_cmd(objects_file, object_id, goal_size, samples, seed, scope, out_dir):
    """Generate problem files over one object's goal space."""
    try:
        objects = load_objects_file(objects_file)
        if object_id is None:
            if len(objects) != 1:
                raise ModelError("several objects in file; pass --object")
            obj = objects[0]
        else:
            matches = [o for o in objects if o.id == object_id]
            if not matches:
                raise ModelError(f"no object with id {object_id!r}")
            obj = matches[0]
        spec = GeneratorSpec(obj, goal_size, samples, seed, scope)
    except INPUT_ERRORS + (ValueError,) as err:
        click.echo(f"input error: {err}", err=True)
        sys.exit(EXIT_INPUT)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for bundle in generate(spec):
        problem = {
            "goal": [{"var": v, "val": c} for v, c in bundle.goal],
            "init_overrides": [],
            "scope": bundle.scope,
        }
        path = out / f"{bundle.instance_id}.problem.json"
        path.write_text(json.dumps(problem, indent=2), encoding="utf-8")
        manifest.append(bundle.instance_id)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    click.echo(f"wrote {len(manifest)} problems to {out}")
    sys.exit(EXIT_OK)


@main.command(name="bench")
@click.argument("objects_file", type=click.Path(exists=True))
@click.option("--object", "object_id", default=None)
@click.option("--goal-sizes", default="1,2", show_default=True, help="Comma-separated goal sizes.")
@click.option("--samples", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scope", type=click.Choice(["full", "bo_relevant"]), default="full", show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@search_options
@click.option("--csv", "csv_path", type=click.Path(), default=None, help="Write records here (default: stdout).")
@click.option("--aggregate", "aggregate_path", type=click.Path(), default=None, help="Write aggregate JSON here.")
def bench_cmd(objects_file, object_id, goal_sizes, samples, seed, scope, workers, csv_path, aggregate_path, **options):
    """Run a generated suite and report per-instance records."""
    try:
        objects = load_objects_file(objects_file)
        obj = objects[0] if object_id is None else next(o for o in objects if o.id == object_id)
        sizes = [int(s) for s in goal_sizes.split(",") if s]
    except (StopIteration, ValueError) as err:
        click.echo(f"input error: {err}", err=True)
        sys.exit(EXIT_INPUT)
    except INPUT_ERRORS as err:
        click.echo(f"input error: {err}", err=True)
        sys.exit(EXIT_INPUT)
    bundles = [
        b
        for size in sizes
        for b in generate(GeneratorSpec(obj, size, samples, seed, scope))
    ]
    config = build_config(**options)
    records, aggregates = run_suite(bundles, [config], workers=workers)
    csv_text = records_to_csv(records)
    if csv_path:
        Path(csv_path).write_text(csv_text, encoding="utf-8")
    else:
        click.echo(csv_text, nl=False)
    if aggregate_path:
        Path(aggregate_path).write_text(aggregates_to_json(aggregates), encoding="utf-8")
    click.echo(
        f"coverage: {aggregates['solved']}/{aggregates['total']}",
        err=True,
    )
    sys.exit(EXIT_OK)


@main.command(name="validate")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--plan", "plan_file", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["strong", "weak"]), default="weak", show_default=True)
def validate_cmd(inputs, plan_file, mode):
    """Check a plan file against a task."""
    try:
        task = load_task(inputs)
        with open(plan_file, encoding="utf-8") as fh:
            tree = plan_from_json(task, json.load(fh))
    except INPUT_ERRORS as err:
        click.echo(f"input error: {err}", err=True)
        sys.exit(EXIT_INPUT)
    report = validate_plan(task, tree, mode)
    if report.valid:
        click.echo(f"valid {mode} plan ({tree_fail_count(tree)} FAIL leaves)")
        sys.exit(EXIT_OK)
    click.echo(f"invalid: {report.message}", err=True)
    if report.path:
        click.echo("at: " + " -> ".join(report.path), err=True)
    sys.exit(EXIT_NEGATIVE)


if __name__ == "__main__":
    main()
