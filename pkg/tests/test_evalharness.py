from __future__ import annotations

import json
import random

import pytest

from codemem import assets
from codemem.drivers import AssistantAction
from codemem.evalharness import (
    IncompleteGrid,
    SuiteParseError,
    TaskRecord,
    aggregate,
    aggregate_by_label,
    parse_suite,
    run_suite,
    serialize_for_judge,
)
from codemem.traces import (
    BUILTIN_TRACES,
    CASE_STUDY_PROMPT,
    builtin_suite_doc,
    record_builtin_traces,
    record_trace,
)


def one_task_suite(checker: dict, task_id="case_study", replies=("no log required", "ok")) -> dict:
    return {
        "tasks": [
            {
                "task_id": task_id,
                "prompt": CASE_STUDY_PROMPT,
                "replies": list(replies),
                "difficulty": 4,
                "scenario": "builtin",
                "checker": checker,
            }
        ]
    }


CASE_STUDY_RULE = {
    "kind": "rule",
    "id": "all_of",
    "params": {
        "checks": [
            {"id": "drive_file_count", "params": {"count": 4}},
            {"id": "no_uploads_from_domain", "params": {"domain": "@agentr.dev"}},
            {"id": "excluded_email_count", "params": {"count": 3}},
            {"id": "skill_registered", "params": {"name": assets.BRIDGE_SKILL_NAME}},
        ]
    },
}


# -- suite parsing -----------------------------------------------------------


def test_parse_rejects_bad_difficulty():
    doc = one_task_suite(CASE_STUDY_RULE)
    doc["tasks"][0]["difficulty"] = 9
    with pytest.raises(SuiteParseError):
        parse_suite(doc)


def test_parse_rejects_unknown_checker_kind():
    doc = one_task_suite({"kind": "vibes"})
    with pytest.raises(SuiteParseError):
        parse_suite(doc)


def test_parse_empty_suite_gives_no_tasks():
    assert parse_suite({"tasks": []}) == []


def test_run_empty_suite_gives_no_records(runtime_factory):
    assert run_suite({"tasks": []}, "replay:/nowhere", runtime_factory) == []


# -- golden suite run -----------------------------------------------------------


@pytest.fixture
def golden_trace_dir(tmp_path, runtime_factory):
    out = tmp_path / "traces"
    from codemem.traces import GOLDEN_USER_TURNS, golden_actions

    record_trace(runtime_factory(), golden_actions(), GOLDEN_USER_TURNS, out / "case_study.jsonl")
    return out


def test_case_study_suite_passes(golden_trace_dir, runtime_factory):
    records = run_suite(
        one_task_suite(CASE_STUDY_RULE), f"replay:{golden_trace_dir}", runtime_factory
    )
    assert len(records) == 1
    record = records[0]
    assert record.passed, record.note
    assert record.assistant_calls == 11  # length of the golden trace
    assert record.total_tokens > 0


def test_adversarial_trace_fails_negative_filter(tmp_path, runtime_factory):
    """A script that uploads the @agentr.dev attachment must be caught."""
    bad_source = (
        "import asyncio\n\n"
        "async def main():\n"
        "    doc = await outlook__get_attachment(email_id='e2')\n"
        "    await onedrive__upload_file(\n"
        "        path=f\"Email Attachments December/AgentR/{doc['filename']}\",\n"
        "        content=doc['content'])\n\n"
        "asyncio.run(main())\n"
        "print('uploaded internal attachment')\n"
    )
    actions = [
        AssistantAction.tool_call(
            "load_functions",
            names=["outlook__get_attachment", "onedrive__upload_file"],
        ),
        AssistantAction.tool_call("execute_code", source=bad_source),
        AssistantAction.final("done"),
    ]
    trace_dir = tmp_path / "bad-traces"
    record_trace(runtime_factory(), actions, (CASE_STUDY_PROMPT,), trace_dir / "case_study.jsonl")
    checker = {
        "kind": "rule",
        "id": "no_uploads_from_domain",
        "params": {"domain": "@agentr.dev"},
    }
    records = run_suite(
        one_task_suite(checker, replies=()), f"replay:{trace_dir}", runtime_factory
    )
    assert not records[0].passed
    assert "no_uploads_from_domain" in records[0].note


def test_builtin_suite_all_pass(tmp_path, runtime_factory):
    trace_dir = tmp_path / "builtin"
    names = record_builtin_traces(trace_dir, runtime_factory)
    assert names == sorted(BUILTIN_TRACES)
    records = run_suite(
        trace_dir / "suite.json", f"replay:{trace_dir}", runtime_factory
    )
    assert len(records) == 5
    failures = [(r.task_id, r.note) for r in records if not r.passed]
    assert failures == []


def test_missing_trace_reported(runtime_factory, tmp_path):
    empty = tmp_path / "no-traces"
    empty.mkdir()
    with pytest.raises(SuiteParseError):
        run_suite(one_task_suite(CASE_STUDY_RULE), f"replay:{empty}", runtime_factory)


def test_parallel_workers_produce_same_records(tmp_path, runtime_factory):
    trace_dir = tmp_path / "builtin"
    record_builtin_traces(trace_dir, runtime_factory)
    serial = run_suite(
        trace_dir / "suite.json", f"replay:{trace_dir}", runtime_factory, workers=1
    )
    parallel = run_suite(
        trace_dir / "suite.json", f"replay:{trace_dir}", runtime_factory, workers=3
    )
    stable = lambda rs: [(r.task_id, r.run_index, r.passed, r.assistant_calls) for r in rs]
    assert stable(serial) == stable(parallel)


# -- judge interface -----------------------------------------------------------


def test_judge_sees_everything_promised(golden_trace_dir, runtime_factory):
    captured = {}

    def judge(doc, rubric):
        captured.update(doc)
        captured["rubric"] = rubric
        return True

    checker = {"kind": "judge", "rubric": "did the files reach the drive?"}
    records = run_suite(
        one_task_suite(checker), f"replay:{golden_trace_dir}", runtime_factory, judge=judge
    )
    assert records[0].passed
    assert captured["rubric"] == "did the files reach the drive?"
    # tool selections with arguments
    selections = captured["tool_selections"]
    assert {"tool": "search_functions", "args": {"query": "fetch emails", "k": 5}} in selections
    # raw executed code
    assert any("agent_main" in code for code in captured["executed_code"])
    # execution outputs and side effects
    assert captured["execution_outputs"][0]["exit_status"] == "success"
    assert any(
        inv["tool"] == "onedrive__upload_file" and inv["ok"] for inv in captured["invocations"]
    )


def test_judge_file_verdicts(golden_trace_dir, runtime_factory, tmp_path):
    verdicts = tmp_path / "verdicts.json"
    verdicts.write_text(json.dumps({"case_study": True}))
    checker = {"kind": "judge", "rubric": "anything"}
    records = run_suite(
        one_task_suite(checker), f"replay:{golden_trace_dir}", runtime_factory,
        judge=f"file:{verdicts}",
    )
    assert records[0].passed
    verdicts.write_text(json.dumps({"case_study": False}))
    records = run_suite(
        one_task_suite(checker), f"replay:{golden_trace_dir}", runtime_factory,
        judge=f"file:{verdicts}",
    )
    assert not records[0].passed


def test_judge_without_configuration_fails_task(golden_trace_dir, runtime_factory):
    checker = {"kind": "judge", "rubric": "anything"}
    records = run_suite(
        one_task_suite(checker), f"replay:{golden_trace_dir}", runtime_factory
    )
    assert not records[0].passed
    assert "no judge configured" in records[0].note


# -- aggregation -----------------------------------------------------------


def fixture_records() -> list[TaskRecord]:
    """25 tasks, 1 run, 24 passed, assistant calls summing to 175."""
    calls = [7] * 25  # sum 175
    records = []
    for i in range(25):
        records.append(
            TaskRecord(
                task_id=f"t{i:02d}",
                run_index=0,
                passed=i != 13,
                assistant_calls=calls[i],
                wall_time=float(i + 1),
                total_tokens=1000 + i,
                session_id=f"s{i}",
            )
        )
    return records


def test_aggregate_matches_reported_row():
    summary = aggregate(fixture_records(), "gemini-like")
    assert summary.correctness_min == 96.0
    assert summary.avg_calls == 7.00
    assert summary.total_tokens == sum(1000 + i for i in range(25))
    # lower median of 1..25 is 13
    assert summary.p50_latency == 13.0


def test_aggregate_all_passed_is_100():
    records = [
        TaskRecord(f"t{i}", 0, True, 5, 1.0, 10, f"s{i}") for i in range(4)
    ]
    assert aggregate(records, "x").correctness_min == 100.0


def test_aggregate_min_across_runs():
    run0 = [TaskRecord(f"t{i}", 0, i != 3, 5, 1.0, 10, "s") for i in range(25)]
    run1 = [TaskRecord(f"t{i}", 1, True, 5, 1.0, 10, "s") for i in range(25)]
    summary = aggregate(run0 + run1, "two-runs")
    assert summary.correctness_min == 96.0


def test_aggregate_incomplete_grid_rejected():
    records = fixture_records()[:-1]  # one task missing
    records += [TaskRecord("t00", 1, True, 5, 1.0, 10, "s")]  # run 1 has one task
    with pytest.raises(IncompleteGrid):
        aggregate(records, "x")
    with pytest.raises(IncompleteGrid):
        aggregate([], "x")


def test_aggregate_permutation_invariant():
    records = fixture_records()
    baseline = aggregate(records, "x")
    rng = random.Random(7)
    for _ in range(5):
        shuffled = records[:]
        rng.shuffle(shuffled)
        assert aggregate(shuffled, "x") == baseline


def test_aggregate_by_label_sorted():
    grouped = {
        "b": [TaskRecord("t", 0, True, 1, 1.0, 1, "s")],
        "a": [TaskRecord("t", 0, False, 3, 2.0, 2, "s")],
    }
    rows = aggregate_by_label(grouped)
    assert [r.label for r in rows] == ["a", "b"]
    assert rows[0].correctness_min == 0.0


def test_even_count_lower_median():
    records = [
        TaskRecord(f"t{i}", 0, True, 1, wall, 1, "s")
        for i, wall in enumerate([1.0, 2.0, 3.0, 4.0])
    ]
    assert aggregate(records, "x").p50_latency == 2.0


def test_serialize_for_judge_schema(runtime_factory):
    runtime = runtime_factory()
    runtime.bootstrap_builtin()
    session = runtime.create_session(scenario=assets.builtin_scenario_doc())
    doc = serialize_for_judge(runtime, session.session_id)
    assert set(doc) >= {
        "session_id",
        "system_prompt",
        "tool_selections",
        "executed_code",
        "execution_outputs",
        "invocations",
        "final_text",
    }
