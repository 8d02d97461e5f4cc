"""Pluggable assistant drivers: replay traces, scripted lists, HTTP models.

A driver turns the visible context into one AssistantAction per step. The
replay driver re-issues actions from a JSONL trace and refuses to continue
if the visible context diverges from what was recorded (hash check), which
is what makes recorded agent runs deterministic regression tests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import httpx

from .errors import CodeMemError

Message = tuple[str, str]  # (role, text)


class DriverError(CodeMemError):
    """Transport or format failure while producing the next action."""


class TraceExhausted(DriverError):
    pass


class TraceDivergence(DriverError):
    def __init__(self, step: int, expected: str, actual: str):
        self.step = step
        super().__init__(
            f"visible context diverged from the trace at step {step}: "
            f"recorded {expected[:12]}..., got {actual[:12]}..."
        )


class HttpError(DriverError):
    pass


@dataclass(frozen=True)
class AssistantAction:
    kind: str  # tool_call | final | ask_user
    tool: str | None = None
    args: dict[str, Any] | None = None
    text: str | None = None

    def rendered(self) -> str:
        """Canonical single-string form for the visible history."""
        if self.kind == "tool_call":
            return f"{self.tool}({json.dumps(self.args or {}, sort_keys=True)})"
        return self.text or ""

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"kind": self.kind}
        if self.tool is not None:
            doc["tool"] = self.tool
        if self.args is not None:
            doc["args"] = self.args
        if self.text is not None:
            doc["text"] = self.text
        return doc

    @staticmethod
    def from_dict(doc: dict[str, Any]) -> "AssistantAction":
        kind = doc.get("kind")
        if kind not in ("tool_call", "final", "ask_user"):
            raise DriverError(f"unknown action kind {kind!r}")
        return AssistantAction(
            kind=kind, tool=doc.get("tool"), args=doc.get("args"), text=doc.get("text")
        )

    @staticmethod
    def tool_call(tool: str, **args: Any) -> "AssistantAction":
        return AssistantAction(kind="tool_call", tool=tool, args=args)

    @staticmethod
    def final(text: str) -> "AssistantAction":
        return AssistantAction(kind="final", text=text)

    @staticmethod
    def ask_user(text: str) -> "AssistantAction":
        return AssistantAction(kind="ask_user", text=text)


def context_hash(visible: list[Message]) -> str:
    digest = hashlib.sha256()
    for role, text in visible:
        digest.update(role.encode("utf-8"))
        digest.update(b"\n")
        digest.update(text.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


class ScriptedDriver:
    """Plays a fixed action list; context-independent. Used to author traces."""

    def __init__(self, actions: list[AssistantAction]):
        self._actions = list(actions)
        self._index = 0

    def next(self, visible: list[Message]) -> AssistantAction:
        if self._index >= len(self._actions):
            raise TraceExhausted(f"scripted driver exhausted after {self._index} steps")
        action = self._actions[self._index]
        self._index += 1
        return action


class ReplayDriver:
    """Replays a recorded JSONL trace, verifying the context hash each step."""

    def __init__(self, path: Path | str):
        self._path = Path(path)
        self._entries: list[dict[str, Any]] = []
        with self._path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    self._entries.append(json.loads(line))
        self._index = 0

    def __len__(self) -> int:
        return len(self._entries)

    def next(self, visible: list[Message]) -> AssistantAction:
        if self._index >= len(self._entries):
            raise TraceExhausted(
                f"trace {self._path.name} exhausted after {self._index} steps"
            )
        entry = self._entries[self._index]
        expected = entry.get("context_hash")
        if expected:
            actual = context_hash(visible)
            if actual != expected:
                raise TraceDivergence(self._index, expected, actual)
        self._index += 1
        return AssistantAction.from_dict(entry)


class RecordingDriver:
    """Wraps a driver and writes each (action, context hash) to a trace file."""

    def __init__(self, inner, path: Path | str):
        self._inner = inner
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._path.write_text("", encoding="utf-8")

    def next(self, visible: list[Message]) -> AssistantAction:
        action = self._inner.next(visible)
        entry = action.to_dict()
        entry["context_hash"] = context_hash(visible)
        with self._path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return action


def driver_from_spec(spec: str):
    """Build a driver from a CLI-style spec.

    ``replay:<trace.jsonl>`` replays a recorded trace; ``http:<endpoint>``
    (or a bare http(s) URL) posts to a chat-completions endpoint.
    """
    if spec.startswith("replay:"):
        return ReplayDriver(Path(spec[len("replay:") :]))
    if spec.startswith(("http://", "https://")):
        return HttpDriver(spec)
    if spec.startswith("http:"):
        return HttpDriver(spec[len("http:") :])
    raise DriverError(f"unknown driver spec {spec!r}")


class HttpDriver:
    """Posts a chat-completions-shaped request and parses one action.

    The ask_user marker is explicit: the model calls the pseudo-tool
    ``ask_user`` with a ``text`` argument. Plain content is final.
    """

    def __init__(self, endpoint: str, model: str = "default", timeout: float = 120.0):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout

    def next(self, visible: list[Message]) -> AssistantAction:
        payload = {
            "model": self.model,
            "messages": [{"role": role, "content": text} for role, text in visible],
        }
        try:
            response = httpx.post(self.endpoint, json=payload, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise HttpError(f"driver endpoint unreachable: {exc}") from exc
        if response.status_code >= 400:
            raise HttpError(f"driver endpoint returned {response.status_code}")
        try:
            message = response.json()["choices"][0]["message"]
        except (ValueError, KeyError, IndexError) as exc:
            raise HttpError(f"driver response is not chat-completions shaped: {exc}") from exc

        tool_calls = message.get("tool_calls") or []
        if tool_calls:
            function = tool_calls[0].get("function", {})
            name = function.get("name", "")
            try:
                args = json.loads(function.get("arguments") or "{}")
            except json.JSONDecodeError as exc:
                raise HttpError(f"tool call arguments are not JSON: {exc}") from exc
            if name == "ask_user":
                return AssistantAction.ask_user(str(args.get("text", "")))
            return AssistantAction(kind="tool_call", tool=name, args=args)
        content = message.get("content")
        if isinstance(content, str):
            return AssistantAction.final(content)
        raise HttpError("driver response has neither tool_calls nor content")
