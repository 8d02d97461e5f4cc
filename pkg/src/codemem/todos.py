"""External working memory: per-session plan checklists with forward-only status.

A write replaces the whole list atomically. Items are identified by their
exact content string; a status may only move pending -> in_progress ->
completed (skipping in_progress is fine). Lists survive process restarts so
the orchestrator can recover its place after a crash.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import CodeMemError

STATUSES = ("pending", "in_progress", "completed")
_STATUS_ORDER = {s: i for i, s in enumerate(STATUSES)}


class UnknownSession(CodeMemError):
    pass


class StatusRegression(CodeMemError):
    def __init__(self, content: str, old: str, new: str):
        self.content = content
        super().__init__(f"todo item {content!r} may not move {old} -> {new}")


class MultipleInProgress(CodeMemError):
    pass


@dataclass(frozen=True)
class TodoItem:
    content: str
    status: str


@dataclass(frozen=True)
class TodoList:
    session_id: str
    items: tuple[TodoItem, ...]
    revision: int

    def first_open_item(self) -> TodoItem | None:
        """The next sub-goal: the first item that is not yet completed."""
        for item in self.items:
            if item.status != "completed":
                return item
        return None


def _coerce_items(items: list) -> tuple[TodoItem, ...]:
    out = []
    for raw in items:
        if isinstance(raw, TodoItem):
            content, status = raw.content, raw.status
        elif isinstance(raw, dict):
            content, status = raw.get("content"), raw.get("status", "pending")
        else:
            raise ValueError(f"todo item must be a mapping, got {type(raw).__name__}")
        if not isinstance(content, str) or not content.strip():
            raise ValueError("todo item content must be a nonempty string")
        if status not in STATUSES:
            raise ValueError(f"unknown todo status {status!r}")
        out.append(TodoItem(content=content, status=status))
    return tuple(out)


class TodoStore:
    """Session-keyed todo lists, persisted one JSON file per session."""

    def __init__(self, root: Path):
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._cache: dict[str, TodoList] = {}

    def _path(self, session_id: str) -> Path:
        return self._root / f"{session_id}.json"

    def ensure_session(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._cache and not self._path(session_id).exists():
                self._save(TodoList(session_id=session_id, items=(), revision=0))

    def _save(self, todo_list: TodoList) -> None:
        doc = {
            "session_id": todo_list.session_id,
            "revision": todo_list.revision,
            "items": [{"content": i.content, "status": i.status} for i in todo_list.items],
        }
        path = self._path(todo_list.session_id)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=2), encoding="utf-8")
        tmp.replace(path)
        self._cache[todo_list.session_id] = todo_list

    def _load(self, session_id: str) -> TodoList:
        cached = self._cache.get(session_id)
        if cached is not None:
            return cached
        path = self._path(session_id)
        if not path.exists():
            raise UnknownSession(f"no such session: {session_id}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        todo_list = TodoList(
            session_id=session_id,
            items=_coerce_items(doc["items"]),
            revision=int(doc["revision"]),
        )
        self._cache[session_id] = todo_list
        return todo_list

    def get_todos(self, session_id: str) -> TodoList:
        with self._lock:
            return self._load(session_id)

    def write_todos(self, session_id: str, items: list) -> TodoList:
        """Replace the session's list; rejected writes leave it untouched."""
        new_items = _coerce_items(items)
        if sum(1 for i in new_items if i.status == "in_progress") > 1:
            raise MultipleInProgress("at most one item may be in_progress")
        with self._lock:
            current = self._load(session_id)
            old_status = {i.content: i.status for i in current.items}
            for item in new_items:
                old = old_status.get(item.content)
                if old is not None and _STATUS_ORDER[item.status] < _STATUS_ORDER[old]:
                    raise StatusRegression(item.content, old, item.status)
            updated = TodoList(
                session_id=session_id,
                items=new_items,
                revision=current.revision + 1,
            )
            self._save(updated)
            return updated
