"""Command-line interface binding the runtime together.

Each invocation builds a Runtime over the configured data directory, so
skills, todos, and trajectories persist across commands. Fixture drive
state is persisted per session as well, which keeps `fixtures load` +
`run` + inspection workflows consistent across processes.
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

import click

from . import __version__, assets
from .config import Config, load_config
from .drivers import driver_from_spec
from .errors import CodeMemError
from .evalharness import aggregate, run_suite
from .fixtures import load_scenario_file
from .metrics import context_cost, phase_timings
from .orchestrator import Runtime
from .traces import record_builtin_traces


def _runtime(config: Config) -> Runtime:
    return Runtime(
        config.data_dir,
        interpreter=config.interpreter,
        default_limits=config.limits,
    )


def _fail(exc: Exception) -> None:
    raise click.ClickException(f"{type(exc).__name__}: {exc}")


@click.group()
@click.version_option(version=__version__, prog_name="codemem")
@click.option("--config", "config_path", type=click.Path(), default=None, help="Config file (JSON)")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    try:
        ctx.obj = load_config(config_path)
    except CodeMemError as exc:
        _fail(exc)


@main.command()
@click.pass_obj
def serve(config: Config) -> None:
    """Run the HTTP service."""
    from .api import serve as serve_app

    try:
        serve_app(config)
    except CodeMemError as exc:
        _fail(exc)


# -- registry -----------------------------------------------------------------


@main.group()
def registry() -> None:
    """Tool registry commands."""


@registry.command("import")
@click.argument("manifest_file", type=click.Path(exists=True))
@click.pass_obj
def registry_import(config: Config, manifest_file: str) -> None:
    runtime = _runtime(config)
    try:
        count = runtime.import_manifest(Path(manifest_file).read_text(encoding="utf-8"))
    except CodeMemError as exc:
        _fail(exc)
    click.echo(f"imported {count} tools")


@registry.command("search")
@click.argument("query")
@click.option("-k", default=5, show_default=True)
@click.pass_obj
def registry_search(config: Config, query: str, k: int) -> None:
    runtime = _runtime(config)
    runtime.bootstrap_builtin()
    try:
        results = runtime.registry.search_functions(query, k)
    except CodeMemError as exc:
        _fail(exc)
    for descriptor in results:
        click.echo(f"{descriptor.name}\t{descriptor.summary}")


# -- skills -----------------------------------------------------------------


@main.group()
def skills() -> None:
    """Skill bank commands."""


@skills.command("list")
@click.pass_obj
def skills_list(config: Config) -> None:
    runtime = _runtime(config)
    for skill in runtime.skills.list_skills():
        flag = " (deprecated)" if skill.deprecated else ""
        click.echo(f"{skill.name}@v{skill.version}{flag}\t{skill.description}")


def _parse_skill_ref(ref: str) -> tuple[str, int | None]:
    if "@v" in ref:
        name, _, version = ref.rpartition("@v")
        return name, int(version)
    return ref, None


@skills.command("show")
@click.argument("ref")
@click.pass_obj
def skills_show(config: Config, ref: str) -> None:
    runtime = _runtime(config)
    name, version = _parse_skill_ref(ref)
    try:
        skill = runtime.skills.get_skill(name, version)
    except CodeMemError as exc:
        _fail(exc)
    click.echo(f"name: {skill.name}")
    click.echo(f"version: {skill.version}")
    click.echo(f"signature: {skill.signature}")
    click.echo(f"description: {skill.description}")
    click.echo(f"required_tools: {', '.join(skill.required_tools)}")
    click.echo(f"content_hash: {skill.content_hash}")
    click.echo(f"created_at: {skill.created_at}")
    click.echo("source:")
    click.echo(skill.source)


@skills.command("export")
@click.argument("ref")
@click.pass_obj
def skills_export(config: Config, ref: str) -> None:
    """Print the stored source, byte-identical to what was registered."""
    runtime = _runtime(config)
    name, version = _parse_skill_ref(ref)
    try:
        skill = runtime.skills.get_skill(name, version)
    except CodeMemError as exc:
        _fail(exc)
    sys.stdout.write(skill.source)


@main.group()
def skill() -> None:
    """Skill execution commands."""


@skill.command("run")
@click.argument("name")
@click.option("--args", "args_json", default="{}", help="JSON arguments for the entrypoint")
@click.option("--version", type=int, default=None)
@click.option("--session", "session_id", default=None, help="Existing session id")
@click.pass_obj
def skill_run(config: Config, name: str, args_json: str, version: int | None, session_id: str | None) -> None:
    runtime = _runtime(config)
    runtime.bootstrap_builtin()
    try:
        arguments = json.loads(args_json)
        if session_id is None:
            session = runtime.create_session(scenario=assets.builtin_scenario_doc())
            session_id = session.session_id
        result = runtime.run_skill(session_id, name, version, arguments)
    except (CodeMemError, json.JSONDecodeError) as exc:
        _fail(exc)
    click.echo(result.stdout_tail, nl=False)
    click.echo(result.exit_summary())
    click.echo(f"session: {session_id}")
    sys.exit(0 if result.success else 1)


# -- fixtures -----------------------------------------------------------------


@main.group()
def fixtures() -> None:
    """Fixture scenario commands."""


@fixtures.command("load")
@click.argument("scenario_file", type=click.Path(exists=True))
@click.option("--session", "session_id", required=True)
@click.pass_obj
def fixtures_load(config: Config, scenario_file: str, session_id: str) -> None:
    runtime = _runtime(config)
    try:
        doc = json.loads(Path(scenario_file).read_text(encoding="utf-8"))
        try:
            runtime.get_session(session_id)
        except CodeMemError:
            runtime.create_session(session_id)
        runtime.load_fixture(session_id, doc)
    except (CodeMemError, json.JSONDecodeError) as exc:
        _fail(exc)
    click.echo(f"loaded scenario {load_scenario_file(scenario_file).name!r} into {session_id}")


# -- run -----------------------------------------------------------------


@main.command()
@click.option("--task", "task_file", type=click.Path(exists=True), required=True)
@click.option("--driver", "driver_spec", required=True, help="replay:<trace> or http:<endpoint>")
@click.pass_obj
def run(config: Config, task_file: str, driver_spec: str) -> None:
    """Run a single task file: {"prompt": ..., "replies": [...], "scenario": ...}."""
    runtime = _runtime(config)
    runtime.bootstrap_builtin()
    try:
        doc = json.loads(Path(task_file).read_text(encoding="utf-8"))
        scenario = doc.get("scenario", "builtin")
        scenario_doc = (
            assets.builtin_scenario_doc()
            if scenario == "builtin"
            else json.loads(Path(scenario).read_text(encoding="utf-8"))
        )
        driver = driver_from_spec(driver_spec)
        session = runtime.create_session(scenario=scenario_doc)
        runtime.run_session(session.session_id, str(doc.get("prompt", "")), driver)
        for reply in doc.get("replies", []):
            if session.status != "awaiting_user":
                break
            runtime.run_session(session.session_id, str(reply), driver)
    except (CodeMemError, json.JSONDecodeError) as exc:
        _fail(exc)
    click.echo(f"session: {session.session_id}")
    click.echo(f"status: {session.status}")


# -- eval -----------------------------------------------------------------


@main.command("eval")
@click.option("--suite", "suite_file", type=click.Path(exists=True), required=True)
@click.option("--driver", "driver_spec", required=True)
@click.option("--repeats", default=1, show_default=True)
@click.option("--out", "out_file", type=click.Path(), default=None)
@click.option("--label", default="codemem")
@click.option("--workers", default=1, show_default=True)
@click.option("--judge", "judge_spec", default=None, help="http:<url> or file:<verdicts.json>")
@click.pass_obj
def eval_cmd(
    config: Config,
    suite_file: str,
    driver_spec: str,
    repeats: int,
    out_file: str | None,
    label: str,
    workers: int,
    judge_spec: str | None,
) -> None:
    """Run a task suite and print a Table-3-style summary row."""

    def runtime_factory() -> Runtime:
        return Runtime(
            Path(tempfile.mkdtemp(prefix="codemem-eval-", dir=str(config.data_dir))),
            interpreter=config.interpreter,
            default_limits=config.limits,
        )

    try:
        records = run_suite(
            Path(suite_file),
            driver_spec,
            runtime_factory,
            repeats=repeats,
            judge=judge_spec,
            workers=workers,
        )
        summary = aggregate(records, label)
    except CodeMemError as exc:
        _fail(exc)
    report = {
        "summary": summary.to_dict(),
        "records": [r.to_dict() for r in records],
    }
    if out_file:
        Path(out_file).write_text(json.dumps(report, indent=2), encoding="utf-8")
    click.echo(
        f"{summary.label}: correctness_min={summary.correctness_min:.0f}% "
        f"avg_calls={summary.avg_calls:.2f} p50_latency={summary.p50_latency:.2f}s "
        f"total_tokens={summary.total_tokens}"
    )
    for record in records:
        mark = "pass" if record.passed else f"FAIL ({record.note})"
        click.echo(f"  {record.task_id} run{record.run_index}: {mark}")


# -- metrics -----------------------------------------------------------------


@main.command()
@click.option("--session", "session_id", required=True)
@click.option("--mode", type=click.Choice(["react", "codemem"]), default="codemem")
@click.pass_obj
def metrics(config: Config, session_id: str, mode: str) -> None:
    runtime = _runtime(config)
    try:
        trajectory = runtime.trajectories.get(session_id)
        report = {
            "session_id": session_id,
            "context_cost": context_cost(trajectory, mode).to_dict(),
            "phase_timings": phase_timings(trajectory).to_dict(),
        }
    except CodeMemError as exc:
        _fail(exc)
    click.echo(json.dumps(report, indent=2))


# -- traces -----------------------------------------------------------------


@main.group()
def traces() -> None:
    """Replay trace utilities."""


@traces.command("record-builtin")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_obj
def traces_record_builtin(config: Config, out_dir: str) -> None:
    """Materialize the bundled case-study traces into a directory."""

    def runtime_factory() -> Runtime:
        return Runtime(
            Path(tempfile.mkdtemp(prefix="codemem-trace-", dir=str(config.data_dir))),
            interpreter=config.interpreter,
            default_limits=config.limits,
        )

    try:
        names = record_builtin_traces(Path(out_dir), runtime_factory)
    except CodeMemError as exc:
        _fail(exc)
    for name in names:
        click.echo(f"recorded {name}.jsonl")


if __name__ == "__main__":
    main()
