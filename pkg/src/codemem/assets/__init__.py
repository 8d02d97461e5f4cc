"""Bundled text assets: system prompt, builtin manifest, case-study fixture."""

from __future__ import annotations

import json
from importlib import resources
from typing import Any

BRIDGE_SKILL_NAME = "outlook_onedrive_bridge"
BRIDGE_SKILL_DESCRIPTION = (
    "Save recent PDF/XLSX email attachments from Outlook into per-company "
    "OneDrive folders, skipping internal @agentr.dev senders"
)
BRIDGE_SKILL_SIGNATURE = "agent_main(days_back=15)"
BRIDGE_SKILL_TOOLS = [
    "outlook__list_emails",
    "outlook__get_attachment",
    "onedrive__upload_file",
]

# Marker embedded in every fixture attachment body; visible-context tests
# scan for it to prove raw payloads never reach the LLM.
PAYLOAD_SENTINEL = "CODEMEM-FIXTURE-PAYLOAD"


def _read_text(name: str) -> str:
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8")


def system_prompt() -> str:
    return _read_text("system_prompt.txt")


def builtin_manifest() -> dict[str, Any]:
    return json.loads(_read_text("manifest.json"))


def builtin_scenario_doc() -> dict[str, Any]:
    return json.loads(_read_text("scenario.json"))


def bridge_skill_source() -> str:
    return _read_text("bridge_skill.py")
