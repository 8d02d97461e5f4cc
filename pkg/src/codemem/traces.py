"""Authored action scripts for the case-study pathways, and trace recording.

Replay traces pin context hashes, so they are materialized by actually
running the scripted actions against a fresh runtime (`record_trace`) rather
than being hand-written. The three bundled scripts cover the exploration
pathway with its Handshake, a mid-run execution failure with state recovery,
and the unbroken baseline the recovery run must converge with.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

from . import assets
from .drivers import AssistantAction, RecordingDriver, ScriptedDriver
from .orchestrator import Runtime

CASE_STUDY_PROMPT = (
    "Go through the past 15 days of emails in my Outlook. Wherever there is a "
    "PDF or XLSX attachment, save it to a OneDrive folder named "
    "'Email Attachments/[Company Name]'. Ignore internal emails from "
    "@agentr.dev. If the company name is codeword, extract the real company "
    "name from the attachment metadata."
)

HANDSHAKE_QUESTION = (
    "Since this workflow fetches emails from a rolling window, running it "
    "multiple times could result in duplicate files. Would you like me to add "
    "a memory (for example a tracking sheet) to track processed emails?"
)

PLAN_CONFIRMATION = (
    "Understood, no processing log. I will filter out emails from @agentr.dev, "
    "keep only PDF and XLSX attachments, resolve codeword companies from "
    "attachment metadata, and upload into per-company folders under "
    "'Email Attachments December'. Shall I proceed?"
)

PLAN_ITEMS = (
    "Load functions for Outlook and OneDrive",
    "Fetch Outlook emails from the last 15 days and filter for (.pdf, .xlsx)",
    "Process sample attachments and extract Company Name",
    "Create folders and upload attachments",
)

_RUNNER = (
    "\n\nimport asyncio\nimport json\n\n"
    "result = asyncio.run(agent_main(days_back=15))\n"
    "print(json.dumps(result, sort_keys=True))\n"
)

BROKEN_SOURCE = (
    'print("DEBUG attachment fetch dump " * 200)\n'
    "import sys\n"
    'sys.exit("simulated failure: transient error while fetching attachments")\n'
)


def exploration_source() -> str:
    """The script the exploration pathway executes: skill function plus runner."""
    return assets.bridge_skill_source() + _RUNNER


def _todos(*statuses: str) -> AssistantAction:
    items = [
        {"content": content, "status": status}
        for content, status in zip(PLAN_ITEMS, statuses)
    ]
    return AssistantAction.tool_call("write_todos", items=items)


def _register_action() -> AssistantAction:
    return AssistantAction.tool_call(
        "register_skill",
        name=assets.BRIDGE_SKILL_NAME,
        description=assets.BRIDGE_SKILL_DESCRIPTION,
        source=assets.bridge_skill_source(),
        entrypoint="agent_main",
        signature=assets.BRIDGE_SKILL_SIGNATURE,
        required_tools=list(assets.BRIDGE_SKILL_TOOLS),
        user_confirmed=True,
    )


def golden_actions() -> list[AssistantAction]:
    """Exploration pathway: discovery, Handshake, plan, execute, register."""
    return [
        AssistantAction.tool_call("search_functions", query="fetch emails", k=5),
        AssistantAction.tool_call(
            "search_functions", query="download attachment upload file onedrive", k=5
        ),
        AssistantAction.tool_call(
            "load_functions", names=list(assets.BRIDGE_SKILL_TOOLS)
        ),
        AssistantAction.ask_user(HANDSHAKE_QUESTION),
        AssistantAction.ask_user(PLAN_CONFIRMATION),
        _todos("completed", "pending", "pending", "pending"),
        _todos("completed", "in_progress", "pending", "pending"),
        AssistantAction.tool_call("execute_code", source=exploration_source()),
        _todos("completed", "completed", "completed", "completed"),
        _register_action(),
        AssistantAction.final(
            "Workflow validated and saved as skill outlook_onedrive_bridge v1. "
            "Uploaded 4 attachments into per-company folders; internal senders "
            "were skipped."
        ),
    ]


GOLDEN_USER_TURNS = (CASE_STUDY_PROMPT, "no log required", "ok")


def recovery_actions() -> list[AssistantAction]:
    """Same goal, but the first execution fails noisily before the fix."""
    return [
        AssistantAction.tool_call(
            "load_functions", names=list(assets.BRIDGE_SKILL_TOOLS)
        ),
        _todos("completed", "pending", "pending", "pending"),
        _todos("completed", "in_progress", "pending", "pending"),
        AssistantAction.tool_call("execute_code", source=BROKEN_SOURCE),
        AssistantAction.tool_call("execute_code", source=exploration_source()),
        _todos("completed", "completed", "completed", "completed"),
        AssistantAction.final(
            "Recovered after a transient failure and completed the workflow."
        ),
    ]


def unbroken_actions() -> list[AssistantAction]:
    """Baseline the recovery run must converge with: no failure injected."""
    actions = recovery_actions()
    return [a for a in actions if (a.args or {}).get("source") != BROKEN_SOURCE]


RECOVERY_USER_TURNS = (CASE_STUDY_PROMPT,)

LIST_COUNT_PROMPT = "How many inbox emails currently have attachments?"
ATTACHMENT_PROBE_PROMPT = (
    "Fetch the first attachment of the most recent email and report its filename."
)

_LIST_COUNT_SOURCE = (
    "import asyncio\n"
    "emails = asyncio.run(outlook__list_emails(filter='hasAttachments eq true'))\n"
    "print(f'{len(emails)} emails have attachments')\n"
)

_ATTACHMENT_PROBE_SOURCE = (
    "import asyncio\n\n"
    "async def main():\n"
    "    emails = await outlook__list_emails(filter='hasAttachments eq true')\n"
    "    doc = await outlook__get_attachment(emails[0]['id'])\n"
    "    print('first attachment:', doc['filename'])\n\n"
    "asyncio.run(main())\n"
)


def list_count_actions() -> list[AssistantAction]:
    return [
        AssistantAction.tool_call("load_functions", names=["outlook__list_emails"]),
        AssistantAction.tool_call("execute_code", source=_LIST_COUNT_SOURCE),
        AssistantAction.final("6 inbox emails have attachments."),
    ]


def attachment_probe_actions() -> list[AssistantAction]:
    return [
        AssistantAction.tool_call(
            "load_functions",
            names=["outlook__list_emails", "outlook__get_attachment"],
        ),
        AssistantAction.tool_call("execute_code", source=_ATTACHMENT_PROBE_SOURCE),
        AssistantAction.final("The newest email's first attachment is acme_invoice.pdf."),
    ]


BUILTIN_TRACES: dict[str, tuple[Callable[[], list[AssistantAction]], tuple[str, ...]]] = {
    "case_study": (golden_actions, GOLDEN_USER_TURNS),
    "case_study_recovery": (recovery_actions, RECOVERY_USER_TURNS),
    "case_study_unbroken": (unbroken_actions, RECOVERY_USER_TURNS),
    "list_count": (list_count_actions, (LIST_COUNT_PROMPT,)),
    "attachment_probe": (attachment_probe_actions, (ATTACHMENT_PROBE_PROMPT,)),
}

EXPECTED_DRIVE_PATHS = [
    "Email Attachments December/Acme/acme_invoice.pdf",
    "Email Attachments December/Globex/globex_report.xlsx",
    "Email Attachments December/Initech/initech_summary.pdf",
    "Email Attachments December/Umbrella/umbrella_contract.pdf",
]


def builtin_suite_doc() -> dict:
    """The bundled desk-scale suite; prompts match the bundled traces."""
    bridge_checks = [
        {"id": "drive_paths", "params": {"paths": EXPECTED_DRIVE_PATHS}},
        {"id": "no_uploads_from_domain", "params": {"domain": "@agentr.dev"}},
        {"id": "excluded_email_count", "params": {"count": 3}},
    ]
    return {
        "tasks": [
            {
                "task_id": "list_count",
                "prompt": LIST_COUNT_PROMPT,
                "difficulty": 1,
                "scenario": "builtin",
                "checker": {
                    "kind": "rule",
                    "id": "stdout_contains",
                    "params": {"text": "6 emails have attachments"},
                },
            },
            {
                "task_id": "attachment_probe",
                "prompt": ATTACHMENT_PROBE_PROMPT,
                "difficulty": 2,
                "scenario": "builtin",
                "checker": {
                    "kind": "rule",
                    "id": "stdout_contains",
                    "params": {"text": "acme_invoice.pdf"},
                },
            },
            {
                "task_id": "case_study",
                "prompt": CASE_STUDY_PROMPT,
                "replies": ["no log required", "ok"],
                "difficulty": 4,
                "scenario": "builtin",
                "checker": {
                    "kind": "rule",
                    "id": "all_of",
                    "params": {
                        "checks": bridge_checks
                        + [
                            {
                                "id": "skill_registered",
                                "params": {"name": assets.BRIDGE_SKILL_NAME},
                            },
                            {"id": "todos_all_completed", "params": {}},
                        ]
                    },
                },
            },
            {
                "task_id": "case_study_recovery",
                "prompt": CASE_STUDY_PROMPT,
                "difficulty": 4,
                "scenario": "builtin",
                "checker": {
                    "kind": "rule",
                    "id": "all_of",
                    "params": {"checks": bridge_checks + [{"id": "todos_all_completed", "params": {}}]},
                },
            },
            {
                "task_id": "case_study_unbroken",
                "prompt": CASE_STUDY_PROMPT,
                "difficulty": 3,
                "scenario": "builtin",
                "checker": {
                    "kind": "rule",
                    "id": "all_of",
                    "params": {"checks": bridge_checks},
                },
            },
        ]
    }


def record_trace(
    runtime: Runtime,
    actions: list[AssistantAction],
    user_turns: tuple[str, ...],
    out_path: Path | str,
) -> str:
    """Run the scripted actions once, recording a replayable trace.

    Returns the session id of the recording run. The runtime must be fresh:
    replaying assumes the same starting state (empty skill bank, builtin
    fixture) that the recording saw.
    """
    runtime.bootstrap_builtin()
    driver = RecordingDriver(ScriptedDriver(actions), out_path)
    session = runtime.create_session(scenario=assets.builtin_scenario_doc())
    for turn in user_turns:
        runtime.run_session(session.session_id, turn, driver)
        if session.status != "awaiting_user":
            break
    return session.session_id


def record_builtin_traces(out_dir: Path | str, runtime_factory: Callable[[], Runtime]) -> list[str]:
    """Materialize every bundled trace plus the matching suite file.

    Writes ``<name>.jsonl`` per trace and ``suite.json``; the directory is
    directly usable as ``codemem eval --suite <dir>/suite.json
    --driver replay:<dir>``.
    """
    import json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (actions_fn, turns) in BUILTIN_TRACES.items():
        record_trace(runtime_factory(), actions_fn(), turns, out_dir / f"{name}.jsonl")
    (out_dir / "suite.json").write_text(
        json.dumps(builtin_suite_doc(), indent=2), encoding="utf-8"
    )
    return sorted(BUILTIN_TRACES)
