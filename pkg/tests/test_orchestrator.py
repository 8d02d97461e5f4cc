from __future__ import annotations

import json

import pytest

from codemem import assets
from codemem.drivers import (
    AssistantAction,
    ReplayDriver,
    ScriptedDriver,
    TraceDivergence,
    TraceExhausted,
    context_hash,
)
from codemem.orchestrator import TRUNCATION_MARKER, Runtime, StepLimitExceeded
from codemem.skillbank import UnknownSkill
from codemem.toolhost import invocation_fingerprint
from codemem.traces import (
    GOLDEN_USER_TURNS,
    PLAN_ITEMS,
    RECOVERY_USER_TURNS,
    golden_actions,
    recovery_actions,
    record_trace,
    unbroken_actions,
)

EXPECTED_DRIVE_PATHS = [
    "Email Attachments December/Acme/acme_invoice.pdf",
    "Email Attachments December/Globex/globex_report.xlsx",
    "Email Attachments December/Initech/initech_summary.pdf",
    "Email Attachments December/Umbrella/umbrella_contract.pdf",
]

# the golden exploration run, event kind by event kind
GOLDEN_EVENT_KINDS = (
    ["session_created", "user_message"]
    + ["assistant_action", "tool_result"] * 3  # two searches + load
    + ["assistant_action"]  # handshake question
    + ["user_message", "assistant_action"]  # "no log required" -> plan confirm
    + ["user_message"]  # "ok"
    + ["assistant_action", "todo_write"] * 2
    + ["assistant_action"]  # execute_code
    + ["invocation"] * 9
    + ["execution_result"]
    + ["assistant_action", "todo_write"]
    + ["assistant_action", "skill_registered"]
    + ["assistant_action"]  # final
)


def fresh_session(runtime: Runtime):
    runtime.bootstrap_builtin()
    return runtime.create_session(scenario=assets.builtin_scenario_doc())


def run_turns(runtime: Runtime, session, driver, turns):
    for turn in turns:
        runtime.run_session(session.session_id, turn, driver)
        if session.status != "awaiting_user":
            break


class SpyDriver:
    """Wraps a driver, keeping every visible context it was shown."""

    def __init__(self, inner):
        self.inner = inner
        self.contexts = []

    def next(self, visible):
        self.contexts.append(list(visible))
        return self.inner.next(visible)


# -- golden trace -----------------------------------------------------------


def test_golden_trace_replay_event_by_event(runtime_factory, tmp_path):
    trace_path = tmp_path / "golden.jsonl"
    record_trace(runtime_factory(), golden_actions(), GOLDEN_USER_TURNS, trace_path)

    runtime = runtime_factory()
    session = fresh_session(runtime)
    run_turns(runtime, session, ReplayDriver(trace_path), GOLDEN_USER_TURNS)

    assert session.status == "done"
    events = session.trajectory.events
    assert [e.kind for e in events] == GOLDEN_EVENT_KINDS
    # ends with register_skill then the final message
    assert events[-2].kind == "skill_registered"
    assert events[-1].payload["kind"] == "final"

    skill = runtime.skills.get_skill(assets.BRIDGE_SKILL_NAME)
    assert skill.version == 1
    assert skill.source == assets.bridge_skill_source()

    state = runtime.fixtures.state(session.session_id)
    assert sorted(state.drive) == EXPECTED_DRIVE_PATHS


def test_golden_first_step_is_search(runtime_factory, tmp_path):
    trace_path = tmp_path / "golden.jsonl"
    record_trace(runtime_factory(), golden_actions(), GOLDEN_USER_TURNS, trace_path)
    first = json.loads(trace_path.read_text().splitlines()[0])
    assert first["kind"] == "tool_call"
    assert first["tool"] == "search_functions"
    assert first["args"] == {"query": "fetch emails", "k": 5}
    assert first["context_hash"]  # every recorded step pins its context


def test_handshake_pauses_session(runtime, fixture_session):
    driver = ScriptedDriver(
        [
            AssistantAction.ask_user("Add a memory to avoid duplicates?"),
            AssistantAction.final("done"),
        ]
    )
    runtime.run_session(fixture_session.session_id, "do the thing", driver)
    assert fixture_session.status == "awaiting_user"
    runtime.run_session(fixture_session.session_id, "no log required", driver)
    assert fixture_session.status == "done"


def test_immediate_final(runtime, fixture_session):
    driver = ScriptedDriver([AssistantAction.final("hi")])
    events = runtime.run_session(fixture_session.session_id, "hello", driver)
    actions = [e for e in events if e.kind == "assistant_action"]
    assert len(actions) == 1
    assert fixture_session.status == "done"


def test_trace_divergence_detected(runtime_factory, tmp_path):
    trace_path = tmp_path / "golden.jsonl"
    record_trace(runtime_factory(), golden_actions(), GOLDEN_USER_TURNS, trace_path)
    runtime = runtime_factory()
    session = fresh_session(runtime)
    driver = ReplayDriver(trace_path)
    with pytest.raises(TraceDivergence) as exc_info:
        # different opening message than the recorded one
        runtime.run_session(session.session_id, "a different task entirely", driver)
    assert exc_info.value.step == 0


def test_trace_exhausted(runtime, fixture_session, tmp_path):
    trace_path = tmp_path / "one.jsonl"
    entry = {"kind": "final", "text": "bye", "context_hash": None}
    trace_path.write_text(json.dumps({k: v for k, v in entry.items() if v is not None}) + "\n")
    driver = ReplayDriver(trace_path)
    runtime.run_session(fixture_session.session_id, "first", driver)
    second = runtime.create_session(scenario=assets.builtin_scenario_doc())
    with pytest.raises(TraceExhausted):
        runtime.run_session(second.session_id, "second", driver)


def test_step_limit_marks_failed_keeps_trajectory(runtime, fixture_session):
    class LoopingDriver:
        def next(self, visible):
            return AssistantAction.tool_call("search_functions", query="emails", k=1)

    with pytest.raises(StepLimitExceeded):
        runtime.run_session(
            fixture_session.session_id, "loop forever", LoopingDriver(), max_steps=3
        )
    assert fixture_session.status == "failed"
    actions = [
        e for e in fixture_session.trajectory.events if e.kind == "assistant_action"
    ]
    assert len(actions) == 3


# -- tool dispatch edges ---------------------------------------------------------


def test_load_functions_idempotent_and_atomic(runtime, fixture_session):
    driver = ScriptedDriver(
        [
            AssistantAction.tool_call("load_functions", names=["outlook__list_emails"]),
            AssistantAction.tool_call("load_functions", names=["outlook__list_emails"]),
            AssistantAction.tool_call(
                "load_functions", names=["outlook__get_attachment", "nope"]
            ),
            AssistantAction.final("done"),
        ]
    )
    events = runtime.run_session(fixture_session.session_id, "load stuff", driver)
    assert fixture_session.loaded_tools == {"outlook__list_emails"}
    error_results = [
        e
        for e in events
        if e.kind == "tool_result" and "UnknownTool" in (e.visible_text or "")
    ]
    assert len(error_results) == 1
    assert "nope" in error_results[0].visible_text


def test_loaded_set_is_subset_of_imported(runtime, fixture_session):
    driver = ScriptedDriver(
        [
            AssistantAction.tool_call("load_functions", names=list(assets.BRIDGE_SKILL_TOOLS)),
            AssistantAction.final("ok"),
        ]
    )
    runtime.run_session(fixture_session.session_id, "load", driver)
    assert fixture_session.loaded_tools <= runtime.registry.names()


def test_register_requires_confirmation_by_default(runtime, fixture_session):
    source = "def agent_main():\n    return 1\n"
    driver = ScriptedDriver(
        [
            AssistantAction.tool_call("execute_code", source="print('ok')"),
            AssistantAction.tool_call(
                "register_skill", name="sk", description="d", source=source
            ),
            AssistantAction.final("done"),
        ]
    )
    events = runtime.run_session(fixture_session.session_id, "go", driver)
    texts = [e.visible_text or "" for e in events]
    assert any("ConfirmationRequired" in t for t in texts)
    with pytest.raises(UnknownSkill):
        runtime.skills.get_skill("sk")


def test_auto_register_runtime_skips_confirmation(runtime_factory):
    runtime = runtime_factory(auto_register=True)
    session = fresh_session(runtime)
    source = "def agent_main():\n    return 1\n"
    driver = ScriptedDriver(
        [
            AssistantAction.tool_call("execute_code", source="print('ok')"),
            AssistantAction.tool_call(
                "register_skill", name="sk", description="d", source=source
            ),
            AssistantAction.final("done"),
        ]
    )
    runtime.run_session(session.session_id, "go", driver)
    assert runtime.skills.get_skill("sk").version == 1


def test_register_without_success_fails_validation(runtime, fixture_session):
    driver = ScriptedDriver(
        [
            AssistantAction.tool_call(
                "register_skill",
                name="sk",
                description="d",
                source="def agent_main():\n    return 1\n",
                user_confirmed=True,
            ),
            AssistantAction.final("done"),
        ]
    )
    events = runtime.run_session(fixture_session.session_id, "go", driver)
    assert any("ValidationMissing" in (e.visible_text or "") for e in events)


# -- reuse fast path --------------------------------------------------------------


def seed_bridge_skill(runtime: Runtime) -> None:
    """Trial -> Saving, scripted: one validated execution, then registration."""
    session = fresh_session(runtime)
    session.loaded_tools.update(assets.BRIDGE_SKILL_TOOLS)
    from codemem.traces import exploration_source

    result = runtime.execute_code(session.session_id, exploration_source())
    assert result.success
    runtime.skills.register_skill(
        name=assets.BRIDGE_SKILL_NAME,
        description=assets.BRIDGE_SKILL_DESCRIPTION,
        source=assets.bridge_skill_source(),
        signature=assets.BRIDGE_SKILL_SIGNATURE,
        required_tools=list(assets.BRIDGE_SKILL_TOOLS),
        validation=__import__("codemem.skillbank", fromlist=["ValidationRecord"]).ValidationRecord(
            session_id=session.session_id,
            execution_id=result.execution_id,
            user_confirmed=True,
        ),
    )


def test_run_skill_zero_driver_calls_four_uploads(runtime):
    seed_bridge_skill(runtime)
    session = runtime.create_session(scenario=assets.builtin_scenario_doc())
    before = len(session.trajectory.events)
    result = runtime.run_skill(
        session.session_id, assets.BRIDGE_SKILL_NAME, arguments={"days_back": 15}
    )
    assert result.success
    new_events = session.trajectory.events[before:]
    assert [e.kind for e in new_events if e.kind == "assistant_action"] == []
    state = runtime.fixtures.state(session.session_id)
    assert sorted(state.drive) == EXPECTED_DRIVE_PATHS
    # required tools were auto-loaded
    assert set(assets.BRIDGE_SKILL_TOOLS) <= session.loaded_tools


def test_run_skill_deterministic_across_reset_fixtures(runtime):
    seed_bridge_skill(runtime)
    fingerprints = []
    for _ in range(2):
        session = runtime.create_session(scenario=assets.builtin_scenario_doc())
        result = runtime.run_skill(
            session.session_id, assets.BRIDGE_SKILL_NAME, arguments={"days_back": 15}
        )
        assert result.success
        records = runtime.toolhost.records_for(result.execution_id)
        state = runtime.fixtures.state(session.session_id)
        fingerprints.append(
            (invocation_fingerprint(records), state.drive_fingerprint(), result.stdout_tail)
        )
    assert fingerprints[0] == fingerprints[1]


def test_run_skill_unknown_skill(runtime, fixture_session):
    with pytest.raises(UnknownSkill):
        runtime.run_skill(fixture_session.session_id, "ghost", arguments={})


# -- visible-context discipline -----------------------------------------------------


def test_visible_history_never_contains_payloads(runtime_factory, tmp_path):
    trace_path = tmp_path / "golden.jsonl"
    record_trace(runtime_factory(), golden_actions(), GOLDEN_USER_TURNS, trace_path)
    runtime = runtime_factory()
    session = fresh_session(runtime)
    spy = SpyDriver(ReplayDriver(trace_path))
    run_turns(runtime, session, spy, GOLDEN_USER_TURNS)
    assert session.status == "done"
    # payloads crossed the bridge...
    assert any(
        assets.PAYLOAD_SENTINEL in json.dumps(r.result, default=str)
        for r in runtime.toolhost.session_records(session.session_id)
        if r.tool == "outlook__get_attachment"
    )
    # ...but never the LLM boundary
    for context in spy.contexts:
        for _, text in context:
            assert assets.PAYLOAD_SENTINEL not in text


# -- state recovery ---------------------------------------------------------------


RECOVERY_BUDGET = 1200


def test_state_recovery_resumes_and_converges(runtime_factory, tmp_path):
    recovery_trace = tmp_path / "recovery.jsonl"
    unbroken_trace = tmp_path / "unbroken.jsonl"
    record_trace(
        runtime_factory(context_budget=RECOVERY_BUDGET),
        recovery_actions(),
        RECOVERY_USER_TURNS,
        recovery_trace,
    )
    record_trace(
        runtime_factory(context_budget=RECOVERY_BUDGET),
        unbroken_actions(),
        RECOVERY_USER_TURNS,
        unbroken_trace,
    )

    # replay the broken run
    runtime = runtime_factory(context_budget=RECOVERY_BUDGET)
    session = fresh_session(runtime)
    spy = SpyDriver(ReplayDriver(recovery_trace))
    run_turns(runtime, session, spy, RECOVERY_USER_TURNS)
    assert session.status == "done"

    # the failure actually truncated the visible history
    assert any(
        any(text == TRUNCATION_MARKER for _, text in context) for context in spy.contexts
    )

    # recovery selected the first non-completed todo as the next sub-goal
    recoveries = [
        e for e in session.trajectory.events if e.kind == "state_recovery"
    ]
    assert len(recoveries) == 1
    assert recoveries[0].payload["selected"] == PLAN_ITEMS[1]

    # replay the unbroken baseline
    baseline_runtime = runtime_factory(context_budget=RECOVERY_BUDGET)
    baseline = fresh_session(baseline_runtime)
    run_turns(
        baseline_runtime, baseline, ReplayDriver(unbroken_trace), RECOVERY_USER_TURNS
    )
    assert baseline.status == "done"

    # identical final drive state
    broken_state = runtime.fixtures.state(session.session_id)
    baseline_state = baseline_runtime.fixtures.state(baseline.session_id)
    assert broken_state.drive_fingerprint() == baseline_state.drive_fingerprint()
    assert sorted(broken_state.drive) == EXPECTED_DRIVE_PATHS


# -- persistence ---------------------------------------------------------------


def test_session_survives_runtime_restart(tmp_path):
    data_dir = tmp_path / "data"
    first = Runtime(data_dir)
    first.bootstrap_builtin()
    session = first.create_session(scenario=assets.builtin_scenario_doc())
    driver = ScriptedDriver(
        [
            AssistantAction.tool_call(
                "write_todos",
                items=[{"content": "step one", "status": "in_progress"}],
            ),
            AssistantAction.final("done"),
        ]
    )
    first.run_session(session.session_id, "plan", driver)

    second = Runtime(data_dir)
    second.bootstrap_builtin()
    restored = second.get_session(session.session_id)
    assert restored.status == "done"
    assert [e.kind for e in restored.trajectory.events] == [
        e.kind for e in session.trajectory.events
    ]
    todos = second.todos.get_todos(session.session_id)
    assert todos.revision == 1
    assert todos.items[0].content == "step one"


def test_event_sequence_numbers_strictly_increase(runtime_factory, tmp_path):
    trace_path = tmp_path / "golden.jsonl"
    record_trace(runtime_factory(), golden_actions(), GOLDEN_USER_TURNS, trace_path)
    runtime = runtime_factory()
    session = fresh_session(runtime)
    run_turns(runtime, session, ReplayDriver(trace_path), GOLDEN_USER_TURNS)
    seqs = [e.seq for e in session.trajectory.events]
    assert seqs == list(range(len(seqs)))
