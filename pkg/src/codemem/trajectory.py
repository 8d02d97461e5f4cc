"""Append-only session trajectories: the substrate for metrics, judging, replay.

Event kinds:
    session_created, user_message, assistant_action, tool_result,
    execution_result, invocation, todo_write, skill_registered,
    state_recovery

Payloads are plain dicts. Any event contributing text to the LLM-visible
history carries it under ``visible_text``; the orchestrator rebuilds its
context window purely from that convention, which is what makes recorded
trajectories replayable.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .errors import CodeMemError


class UnknownTrajectory(CodeMemError):
    pass


EVENT_KINDS = (
    "session_created",
    "user_message",
    "assistant_action",
    "tool_result",
    "execution_result",
    "invocation",
    "todo_write",
    "skill_registered",
    "state_recovery",
)


@dataclass(frozen=True)
class Event:
    seq: int
    kind: str
    at: str
    payload: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"seq": self.seq, "kind": self.kind, "at": self.at, "payload": self.payload}

    @property
    def visible_text(self) -> str | None:
        text = self.payload.get("visible_text")
        return text if isinstance(text, str) else None


class Trajectory:
    def __init__(self, session_id: str, system_prompt: str):
        self.session_id = session_id
        self.system_prompt = system_prompt
        self._events: list[Event] = []
        self._lock = threading.Lock()
        self._sink = None  # set by TrajectoryStore for persistence

    @property
    def events(self) -> list[Event]:
        with self._lock:
            return list(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def append(self, kind: str, payload: dict[str, Any]) -> Event:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._lock:
            event = Event(
                seq=len(self._events),
                kind=kind,
                at=datetime.now(timezone.utc).isoformat(),
                payload=payload,
            )
            self._events.append(event)
        if self._sink is not None:
            self._sink(self.session_id, event)
        return event

    def events_after(self, seq: int) -> list[Event]:
        with self._lock:
            return [e for e in self._events if e.seq > seq]

    def execution_status(self, execution_id: str) -> str | None:
        """Exit status of the referenced execution, or None if unknown."""
        for event in self.events:
            if event.kind == "execution_result":
                if event.payload.get("execution_id") == execution_id:
                    return event.payload.get("exit_status")
        return None


class TrajectoryStore:
    """One JSONL file per session under ``<root>/<session_id>/trajectory.jsonl``."""

    def __init__(self, root: Path):
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._open: dict[str, Trajectory] = {}
        self._lock = threading.Lock()

    def _dir(self, session_id: str) -> Path:
        return self._root / session_id

    def create(self, session_id: str, system_prompt: str) -> Trajectory:
        with self._lock:
            if session_id in self._open or self._dir(session_id).exists():
                raise CodeMemError(f"session {session_id!r} already has a trajectory")
            session_dir = self._dir(session_id)
            session_dir.mkdir(parents=True)
            (session_dir / "meta.json").write_text(
                json.dumps({"session_id": session_id, "system_prompt": system_prompt}),
                encoding="utf-8",
            )
            trajectory = Trajectory(session_id, system_prompt)
            trajectory._sink = self._persist_event
            self._open[session_id] = trajectory
            return trajectory

    def _persist_event(self, session_id: str, event: Event) -> None:
        path = self._dir(session_id) / "trajectory.jsonl"
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")

    def get(self, session_id: str) -> Trajectory:
        with self._lock:
            trajectory = self._open.get(session_id)
            if trajectory is not None:
                return trajectory
            session_dir = self._dir(session_id)
            meta_path = session_dir / "meta.json"
            if not meta_path.exists():
                raise UnknownTrajectory(f"no trajectory for session {session_id!r}")
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            trajectory = Trajectory(session_id, meta.get("system_prompt", ""))
            events_path = session_dir / "trajectory.jsonl"
            if events_path.exists():
                with events_path.open(encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            doc = json.loads(line)
                            trajectory._events.append(
                                Event(
                                    seq=doc["seq"],
                                    kind=doc["kind"],
                                    at=doc["at"],
                                    payload=doc["payload"],
                                )
                            )
            trajectory._sink = self._persist_event
            self._open[session_id] = trajectory
            return trajectory

    def exists(self, session_id: str) -> bool:
        return session_id in self._open or self._dir(session_id).exists()

    def session_ids(self) -> list[str]:
        with self._lock:
            on_disk = {p.name for p in self._root.iterdir() if p.is_dir()}
            return sorted(on_disk | set(self._open))
