"""Task-suite runner, judge interface, and result aggregation.

A suite is a JSON list of tasks; each task names a fixture scenario, a
driver prompt (plus scripted user replies for handshake turns), and a
checker. Rule checkers inspect invocation records and fixture end-state so
the bundled suite needs no live judge; judge checkers serialize the full
trajectory — tool selections with arguments, raw executed code, execution
outputs — for an external endpoint or a stubbed verdict file.
"""

from __future__ import annotations

import base64
import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import httpx

from .drivers import DriverError, ReplayDriver, driver_from_spec
from .errors import CodeMemError
from .metrics import trajectory_tokens
from .orchestrator import Runtime, StepLimitExceeded


class SuiteParseError(CodeMemError):
    pass


class FixtureMissing(CodeMemError):
    pass


class IncompleteGrid(CodeMemError):
    pass


@dataclass(frozen=True)
class RuleCheck:
    checker_id: str
    params: dict[str, Any]


@dataclass(frozen=True)
class JudgeCheck:
    rubric: str


@dataclass(frozen=True)
class Task:
    task_id: str
    prompt: str
    difficulty: int
    scenario: str  # "builtin" or a scenario file path
    checker: RuleCheck | JudgeCheck
    replies: tuple[str, ...] = ()


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    run_index: int
    passed: bool
    assistant_calls: int
    wall_time: float
    total_tokens: int
    session_id: str
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "run_index": self.run_index,
            "passed": self.passed,
            "assistant_calls": self.assistant_calls,
            "wall_time": self.wall_time,
            "total_tokens": self.total_tokens,
            "session_id": self.session_id,
            "note": self.note,
        }


@dataclass(frozen=True)
class SummaryRow:
    label: str
    correctness_min: float  # percent
    avg_calls: float
    p50_latency: float
    total_tokens: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "correctness_min": self.correctness_min,
            "avg_calls": self.avg_calls,
            "p50_latency": self.p50_latency,
            "total_tokens": self.total_tokens,
        }


# -- suite parsing -------------------------------------------------------------


def parse_suite(doc: dict[str, Any] | str | Path) -> list[Task]:
    if isinstance(doc, Path):
        doc = doc.read_text(encoding="utf-8")
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SuiteParseError(f"suite is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("tasks"), list):
        raise SuiteParseError("suite must be an object with a 'tasks' list")
    tasks = []
    for raw in doc["tasks"]:
        try:
            difficulty = int(raw["difficulty"])
            if not 1 <= difficulty <= 5:
                raise SuiteParseError(
                    f"task {raw.get('task_id')}: difficulty must be 1..5"
                )
            checker_doc = raw["checker"]
            if checker_doc.get("kind") == "rule":
                checker: RuleCheck | JudgeCheck = RuleCheck(
                    checker_id=checker_doc["id"], params=checker_doc.get("params", {})
                )
            elif checker_doc.get("kind") == "judge":
                checker = JudgeCheck(rubric=checker_doc["rubric"])
            else:
                raise SuiteParseError(
                    f"task {raw.get('task_id')}: checker kind must be rule or judge"
                )
            tasks.append(
                Task(
                    task_id=str(raw["task_id"]),
                    prompt=str(raw["prompt"]),
                    difficulty=difficulty,
                    scenario=str(raw.get("scenario", "builtin")),
                    checker=checker,
                    replies=tuple(raw.get("replies", [])),
                )
            )
        except KeyError as exc:
            raise SuiteParseError(f"task is missing field {exc}") from exc
    return tasks


# -- rule checkers -------------------------------------------------------------

RuleFn = Callable[[Runtime, str, dict[str, Any]], bool]


def _content_bytes(value: Any) -> bytes:
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, dict) and isinstance(value.get("b64"), str):
        return base64.b64decode(value["b64"])
    return b""


def upload_source_emails(runtime: Runtime, session_id: str) -> list[str | None]:
    """Attribute each successful upload to the fixture email whose attachment
    bytes match the uploaded content; None when nothing matches."""
    state = runtime.fixtures.state(session_id)
    if state is None:
        return []
    by_bytes: dict[bytes, str] = {}
    for email in state.scenario.emails:
        for attachment in email.attachments:
            by_bytes.setdefault(attachment.content, email.id)
    sources = []
    for record in runtime.toolhost.session_records(session_id):
        if record.tool.endswith("__upload_file") and record.ok:
            sources.append(by_bytes.get(_content_bytes(record.args.get("content"))))
    return sources


def _check_drive_file_count(runtime: Runtime, session_id: str, params: dict) -> bool:
    state = runtime.fixtures.state(session_id)
    return state is not None and len(state.drive) == int(params["count"])


def _check_drive_paths(runtime: Runtime, session_id: str, params: dict) -> bool:
    state = runtime.fixtures.state(session_id)
    return state is not None and sorted(state.drive) == sorted(params["paths"])


def _check_no_uploads_from_domain(runtime: Runtime, session_id: str, params: dict) -> bool:
    domain = params["domain"]
    state = runtime.fixtures.state(session_id)
    if state is None:
        return False
    emails = {e.id: e for e in state.scenario.emails}
    for source in upload_source_emails(runtime, session_id):
        if source is not None and domain in emails[source].from_address:
            return False
    return True


def _check_excluded_email_count(runtime: Runtime, session_id: str, params: dict) -> bool:
    state = runtime.fixtures.state(session_id)
    if state is None:
        return False
    uploaded = {s for s in upload_source_emails(runtime, session_id) if s is not None}
    excluded = len(state.scenario.emails) - len(uploaded)
    return excluded == int(params["count"])


def _check_skill_registered(runtime: Runtime, session_id: str, params: dict) -> bool:
    wanted = params.get("name")
    for event in runtime.trajectories.get(session_id).events:
        if event.kind == "skill_registered":
            if wanted is None or event.payload.get("name") == wanted:
                return True
    return False


def _check_stdout_contains(runtime: Runtime, session_id: str, params: dict) -> bool:
    text = params["text"]
    for event in runtime.trajectories.get(session_id).events:
        if event.kind == "execution_result" and text in event.payload.get("stdout_tail", ""):
            return True
    return False


def _check_final_contains(runtime: Runtime, session_id: str, params: dict) -> bool:
    text = params["text"]
    for event in reversed(runtime.trajectories.get(session_id).events):
        if event.kind == "assistant_action" and event.payload.get("kind") == "final":
            return text in (event.payload.get("text") or "")
    return False


def _check_todos_all_completed(runtime: Runtime, session_id: str, params: dict) -> bool:
    todo_list = runtime.todos.get_todos(session_id)
    return bool(todo_list.items) and all(i.status == "completed" for i in todo_list.items)


def _check_all_of(runtime: Runtime, session_id: str, params: dict) -> bool:
    for check_doc in params["checks"]:
        fn = RULE_CHECKERS.get(check_doc["id"])
        if fn is None or not fn(runtime, session_id, check_doc.get("params", {})):
            return False
    return True


RULE_CHECKERS: dict[str, RuleFn] = {
    "drive_file_count": _check_drive_file_count,
    "drive_paths": _check_drive_paths,
    "no_uploads_from_domain": _check_no_uploads_from_domain,
    "excluded_email_count": _check_excluded_email_count,
    "skill_registered": _check_skill_registered,
    "stdout_contains": _check_stdout_contains,
    "final_contains": _check_final_contains,
    "todos_all_completed": _check_todos_all_completed,
    "all_of": _check_all_of,
}


# -- judge interface -------------------------------------------------------------


def serialize_for_judge(runtime: Runtime, session_id: str) -> dict[str, Any]:
    """Everything a judge is promised: tool selections with arguments, the raw
    code executed in the sandbox, and execution outputs with side effects."""
    trajectory = runtime.trajectories.get(session_id)
    tool_selections = []
    executed_code = []
    execution_outputs = []
    final_text = None
    for event in trajectory.events:
        if event.kind == "assistant_action":
            if event.payload.get("kind") == "tool_call":
                tool_selections.append(
                    {"tool": event.payload.get("tool"), "args": event.payload.get("args")}
                )
            elif event.payload.get("kind") == "final":
                final_text = event.payload.get("text")
        elif event.kind == "execution_result":
            executed_code.append(event.payload.get("source", ""))
            execution_outputs.append(
                {
                    "execution_id": event.payload.get("execution_id"),
                    "exit_status": event.payload.get("exit_status"),
                    "stdout_tail": event.payload.get("stdout_tail"),
                }
            )
    invocations = [
        {
            "tool": r.tool,
            "args": r.args,
            "ok": r.ok,
            "result": r.result,
            "error_kind": r.error_kind,
        }
        for r in runtime.toolhost.session_records(session_id)
    ]
    return {
        "session_id": session_id,
        "system_prompt": trajectory.system_prompt,
        "tool_selections": tool_selections,
        "executed_code": executed_code,
        "execution_outputs": execution_outputs,
        "invocations": invocations,
        "final_text": final_text,
    }


JudgeFn = Callable[[dict[str, Any], str], bool]


def make_judge(spec: str | JudgeFn | None) -> JudgeFn | None:
    if spec is None or callable(spec):
        return spec
    if spec.startswith("http:") or spec.startswith("https:"):
        endpoint = spec

        def http_judge(doc: dict[str, Any], rubric: str) -> bool:
            response = httpx.post(
                endpoint, json={"rubric": rubric, "trajectory": doc}, timeout=120.0
            )
            response.raise_for_status()
            return bool(response.json().get("passed"))

        return http_judge
    if spec.startswith("file:"):
        verdicts = json.loads(Path(spec[5:]).read_text(encoding="utf-8"))

        def file_judge(doc: dict[str, Any], rubric: str) -> bool:
            return bool(verdicts.get(doc.get("task_id", ""), False))

        return file_judge
    raise SuiteParseError(f"unknown judge spec {spec!r}")


# -- the runner -------------------------------------------------------------


def _make_driver(driver_spec: str, task: Task):
    if driver_spec.startswith("replay:"):
        # for suites the replay spec names a directory of per-task traces
        trace = Path(driver_spec[len("replay:") :]) / f"{task.task_id}.jsonl"
        if not trace.exists():
            raise SuiteParseError(f"no trace for task {task.task_id}: {trace}")
        return ReplayDriver(trace)
    try:
        return driver_from_spec(driver_spec)
    except DriverError as exc:
        raise SuiteParseError(str(exc)) from exc


def _scenario_doc(task: Task) -> dict[str, Any]:
    from . import assets

    if task.scenario == "builtin":
        return assets.builtin_scenario_doc()
    path = Path(task.scenario)
    if not path.exists():
        raise FixtureMissing(f"task {task.task_id}: scenario file {path} not found")
    return json.loads(path.read_text(encoding="utf-8"))


def _run_one(
    task: Task,
    run_index: int,
    driver_spec: str,
    runtime_factory: Callable[[], Runtime],
    judge: JudgeFn | None,
) -> TaskRecord:
    runtime = runtime_factory()
    runtime.bootstrap_builtin()
    scenario = _scenario_doc(task)
    session = runtime.create_session(scenario=scenario)
    driver = _make_driver(driver_spec, task)
    note = ""
    started = time.perf_counter()
    try:
        runtime.run_session(session.session_id, task.prompt, driver)
        for reply in task.replies:
            if session.status != "awaiting_user":
                break
            runtime.run_session(session.session_id, reply, driver)
    except (DriverError, StepLimitExceeded, CodeMemError) as exc:
        note = f"{type(exc).__name__}: {exc}"
    wall_time = time.perf_counter() - started

    passed = False
    if not note:
        if session.status != "done":
            note = f"session ended {session.status}"
        elif isinstance(task.checker, RuleCheck):
            fn = RULE_CHECKERS.get(task.checker.checker_id)
            if fn is None:
                note = f"unknown rule checker {task.checker.checker_id!r}"
            else:
                passed = fn(runtime, session.session_id, task.checker.params)
                if not passed:
                    note = f"rule {task.checker.checker_id} failed"
        else:
            if judge is None:
                note = "judge checker but no judge configured"
            else:
                doc = serialize_for_judge(runtime, session.session_id)
                doc["task_id"] = task.task_id
                passed = judge(doc, task.checker.rubric)
                if not passed:
                    note = "judge verdict: failed"

    trajectory = runtime.trajectories.get(session.session_id)
    assistant_calls = sum(1 for e in trajectory.events if e.kind == "assistant_action")
    return TaskRecord(
        task_id=task.task_id,
        run_index=run_index,
        passed=passed,
        assistant_calls=assistant_calls,
        wall_time=wall_time,
        total_tokens=trajectory_tokens(trajectory),
        session_id=session.session_id,
        note=note,
    )


def run_suite(
    suite: dict[str, Any] | str | Path,
    driver_spec: str,
    runtime_factory: Callable[[], Runtime],
    *,
    repeats: int = 1,
    judge: str | JudgeFn | None = None,
    workers: int = 1,
) -> list[TaskRecord]:
    """Execute every task `repeats` times in fresh runtimes and sessions."""
    tasks = parse_suite(suite)
    judge_fn = make_judge(judge)
    jobs = [(task, run) for run in range(repeats) for task in tasks]
    if workers <= 1:
        records = [
            _run_one(task, run, driver_spec, runtime_factory, judge_fn)
            for task, run in jobs
        ]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(
                pool.map(
                    lambda job: _run_one(job[0], job[1], driver_spec, runtime_factory, judge_fn),
                    jobs,
                )
            )
    records.sort(key=lambda r: (r.run_index, r.task_id))
    return records


# -- aggregation -------------------------------------------------------------


def aggregate(records: list[TaskRecord], label: str) -> SummaryRow:
    """Collapse a complete task x run grid into one summary row.

    Correctness is the suite pass-rate per run; the row reports the minimum
    across runs. avg_calls is the mean over all records; p50 latency is the
    lower median; tokens are summed.
    """
    if not records:
        raise IncompleteGrid("no records to aggregate")
    by_run: dict[int, list[TaskRecord]] = {}
    for record in records:
        by_run.setdefault(record.run_index, []).append(record)
    task_ids = {r.task_id for r in records}
    for run_index, run_records in by_run.items():
        seen = [r.task_id for r in run_records]
        if len(seen) != len(set(seen)) or set(seen) != task_ids:
            raise IncompleteGrid(
                f"run {run_index} does not cover every task exactly once"
            )
    correctness_min = min(
        100.0 * sum(1 for r in run_records if r.passed) / len(run_records)
        for run_records in by_run.values()
    )
    wall_times = sorted(r.wall_time for r in records)
    p50 = wall_times[(len(wall_times) - 1) // 2]
    return SummaryRow(
        label=label,
        correctness_min=correctness_min,
        avg_calls=statistics.mean(r.assistant_calls for r in records),
        p50_latency=p50,
        total_tokens=sum(r.total_tokens for r in records),
    )


def aggregate_by_label(grouped: dict[str, list[TaskRecord]]) -> list[SummaryRow]:
    return [aggregate(records, label) for label, records in sorted(grouped.items())]
