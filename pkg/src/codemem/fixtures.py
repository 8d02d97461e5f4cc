"""Mock Outlook/OneDrive environment backing the fixture tool bindings.

A scenario file pins a mailbox (emails with attachments) and a reference
clock; each session gets its own mutable drive state so uploads from
parallel sessions never interfere. The email filter grammar accepts exactly
the two predicates generated scripts use: a received-date lower bound and an
attachment-presence flag, joined by ``and``.
"""

from __future__ import annotations

import base64
import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .errors import CodeMemError
from .toolerrors import ToolError


class FilterParseError(ToolError):
    def __init__(self, token: str):
        super().__init__("filter_parse", f"unsupported filter expression: {token!r}")


class UnknownEmail(ToolError):
    def __init__(self, email_id: str):
        super().__init__("unknown_email", f"no email with id {email_id!r}")


class NoAttachment(ToolError):
    def __init__(self, email_id: str):
        super().__init__("no_attachment", f"email {email_id!r} has no attachments")


@dataclass(frozen=True)
class FixtureAttachment:
    filename: str
    content: bytes
    company: str | None = None
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class FixtureEmail:
    id: str
    from_address: str
    received_at: datetime
    subject: str
    attachments: tuple[FixtureAttachment, ...]

    @property
    def has_attachments(self) -> bool:
        return bool(self.attachments)


@dataclass(frozen=True)
class FixtureScenario:
    name: str
    reference_time: datetime | None
    emails: tuple[FixtureEmail, ...]


def _parse_timestamp(value: str) -> datetime:
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def load_scenario(doc: dict[str, Any] | str) -> FixtureScenario:
    if isinstance(doc, str):
        doc = json.loads(doc)
    emails = []
    for raw in doc.get("emails", []):
        attachments = []
        for a in raw.get("attachments", []):
            if "content_b64" in a:
                content = base64.b64decode(a["content_b64"])
            else:
                content = str(a.get("content", "")).encode("utf-8")
            attachments.append(
                FixtureAttachment(
                    filename=a["filename"],
                    content=content,
                    company=a.get("company"),
                    metadata=dict(a.get("metadata", {})),
                )
            )
        emails.append(
            FixtureEmail(
                id=raw["id"],
                from_address=raw["from"],
                received_at=_parse_timestamp(raw["received_at"]),
                subject=raw.get("subject", ""),
                attachments=tuple(attachments),
            )
        )
    reference_time = doc.get("reference_time")
    return FixtureScenario(
        name=doc.get("name", "scenario"),
        reference_time=_parse_timestamp(reference_time) if reference_time else None,
        emails=tuple(emails),
    )


def load_scenario_file(path: Path | str) -> FixtureScenario:
    return load_scenario(Path(path).read_text(encoding="utf-8"))


_DATE_PREDICATE = re.compile(r"^receivedDateTime\s*>=\s*(?P<value>.+)$")
_ATTACH_PREDICATE = re.compile(r"^hasAttachments\s+eq\s+(?P<value>true|false)$")


def parse_filter(expression: str) -> list[tuple[str, Any]]:
    """Parse the filter grammar into (field, value) predicates.

    Anything outside the two supported predicates raises FilterParseError
    echoing the offending conjunct, so a generated script fails loudly
    instead of silently matching everything.
    """
    predicates: list[tuple[str, Any]] = []
    expression = expression.strip()
    if not expression:
        return predicates
    for conjunct in re.split(r"\s+and\s+", expression):
        conjunct = conjunct.strip()
        m = _DATE_PREDICATE.match(conjunct)
        if m:
            try:
                predicates.append(("received_at", _parse_timestamp(m.group("value").strip())))
            except ValueError:
                raise FilterParseError(m.group("value").strip()) from None
            continue
        m = _ATTACH_PREDICATE.match(conjunct)
        if m:
            predicates.append(("has_attachments", m.group("value") == "true"))
            continue
        raise FilterParseError(conjunct)
    return predicates


def _content_value(content: bytes) -> Any:
    """Represent raw bytes in a JSON result: UTF-8 text or a b64 wrapper."""
    try:
        return content.decode("utf-8")
    except UnicodeDecodeError:
        return {"b64": base64.b64encode(content).decode("ascii")}


def _content_bytes(value: Any) -> bytes:
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, dict) and isinstance(value.get("b64"), str):
        try:
            return base64.b64decode(value["b64"], validate=True)
        except Exception:
            raise ToolError("bad_args", "content.b64 is not valid base64") from None
    raise ToolError("bad_args", "content must be a string or {'b64': ...}")


class FixtureState:
    """One session's view of the mock services: fixed mailbox, mutable drive."""

    def __init__(self, scenario: FixtureScenario):
        self.scenario = scenario
        self.drive: dict[str, bytes] = {}
        self._emails = {e.id: e for e in scenario.emails}

    # -- outlook ------------------------------------------------------------

    def list_emails(self, filter_expression: str = "") -> list[dict[str, Any]]:
        predicates = parse_filter(filter_expression)
        matched = []
        for email in self.scenario.emails:
            keep = True
            for fieldname, value in predicates:
                if fieldname == "received_at" and email.received_at < value:
                    keep = False
                elif fieldname == "has_attachments" and email.has_attachments != value:
                    keep = False
            if keep:
                matched.append(email)
        matched.sort(key=lambda e: e.received_at, reverse=True)
        return [
            {
                "id": e.id,
                "from": e.from_address,
                "received_at": e.received_at.isoformat(),
                "subject": e.subject,
                "has_attachments": e.has_attachments,
                "attachment_names": [a.filename for a in e.attachments],
            }
            for e in matched
        ]

    def get_attachment(self, email_id: str, index: int = 0) -> dict[str, Any]:
        email = self._emails.get(email_id)
        if email is None:
            raise UnknownEmail(email_id)
        if not email.attachments:
            raise NoAttachment(email_id)
        if not 0 <= index < len(email.attachments):
            raise ToolError("bad_args", f"attachment index {index} out of range")
        attachment = email.attachments[index]
        return {
            "filename": attachment.filename,
            "content": _content_value(attachment.content),
            "company": attachment.company,
            "metadata": dict(attachment.metadata),
        }

    # -- onedrive -----------------------------------------------------------

    def upload_file(self, path: str, content: Any) -> dict[str, Any]:
        if not isinstance(path, str) or not path.strip():
            raise ToolError("bad_args", "path must be a nonempty string")
        data = _content_bytes(content)
        self.drive[path] = data
        return {"path": path, "bytes_written": len(data)}

    # -- inspection ---------------------------------------------------------

    def drive_listing(self) -> dict[str, dict[str, Any]]:
        return {
            path: {"size": len(data), "sha256": hashlib.sha256(data).hexdigest()}
            for path, data in sorted(self.drive.items())
        }

    def drive_fingerprint(self) -> str:
        """Canonical digest of the full drive state, content included."""
        doc = {p: hashlib.sha256(d).hexdigest() for p, d in sorted(self.drive.items())}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


class FixtureStore:
    """Per-session fixture states, with optional drive persistence."""

    def __init__(self, persist_dir: Path | None = None):
        self._states: dict[str, FixtureState] = {}
        self._scenarios: dict[str, FixtureScenario] = {}
        self._lock = threading.Lock()
        self._persist_dir = Path(persist_dir) if persist_dir else None

    def load(self, session_id: str, scenario: FixtureScenario) -> FixtureState:
        with self._lock:
            state = FixtureState(scenario)
            self._states[session_id] = state
            self._scenarios[session_id] = scenario
            self._restore_drive(session_id, state)
            return state

    def reset(self, session_id: str) -> FixtureState:
        """Fresh state from the session's scenario; drive wiped."""
        with self._lock:
            scenario = self._scenarios.get(session_id)
            if scenario is None:
                raise CodeMemError(f"session {session_id!r} has no fixture scenario")
            state = FixtureState(scenario)
            self._states[session_id] = state
            self._persist_drive(session_id, state)
            return state

    def state(self, session_id: str) -> FixtureState | None:
        return self._states.get(session_id)

    def require(self, session_id: str) -> FixtureState:
        state = self.state(session_id)
        if state is None:
            raise ToolError("no_fixture", f"session {session_id!r} has no fixture loaded")
        return state

    # -- drive persistence (best-effort inspection aid) ----------------------

    def _drive_path(self, session_id: str) -> Path | None:
        if self._persist_dir is None:
            return None
        return self._persist_dir / session_id / "drive.json"

    def _persist_drive(self, session_id: str, state: FixtureState) -> None:
        path = self._drive_path(session_id)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {p: base64.b64encode(d).decode("ascii") for p, d in state.drive.items()}
        path.write_text(json.dumps(doc, indent=2), encoding="utf-8")

    def _restore_drive(self, session_id: str, state: FixtureState) -> None:
        path = self._drive_path(session_id)
        if path is None or not path.exists():
            return
        doc = json.loads(path.read_text(encoding="utf-8"))
        state.drive = {p: base64.b64decode(v) for p, v in doc.items()}

    def note_mutation(self, session_id: str) -> None:
        state = self._states.get(session_id)
        if state is not None:
            self._persist_drive(session_id, state)
