"""Dispatches bridge tool calls to bindings and records every invocation.

Bindings are either fixture functions (the mock Outlook/OneDrive services)
or a generic HTTP POST. Every call that reaches the host — successful or
not — leaves exactly one InvocationRecord, densely numbered within its
execution; that log is what metrics, judges, and the determinism harness
read.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Callable, Protocol

import httpx

from .fixtures import FixtureStore
from .toolerrors import BindingError, NotLoaded, ToolError, UnboundTool


@dataclass(frozen=True)
class ExecutionContext:
    execution_id: str
    session_id: str
    loaded_tools: frozenset[str]


@dataclass(frozen=True)
class InvocationRecord:
    invocation_id: str
    execution_id: str
    tool: str
    args: dict[str, Any]
    ok: bool
    result: Any
    error_kind: str | None
    error_message: str | None
    sequence_index: int
    at: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "invocation_id": self.invocation_id,
            "execution_id": self.execution_id,
            "tool": self.tool,
            "args": self.args,
            "ok": self.ok,
            "result": self.result,
            "error_kind": self.error_kind,
            "error_message": self.error_message,
            "sequence_index": self.sequence_index,
            "at": self.at,
        }


class Binding(Protocol):
    def __call__(self, args: dict[str, Any], session_id: str) -> Any: ...


def invocation_fingerprint(records: list[InvocationRecord]) -> str:
    """Digest of the semantic call sequence: ids and timestamps excluded."""
    doc = [
        [r.sequence_index, r.tool, r.args, r.ok, r.result, r.error_kind]
        for r in records
    ]
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


class HttpBinding:
    """POST the args document to a fixed URL; the response body is the result."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def __call__(self, args: dict[str, Any], session_id: str) -> Any:
        try:
            response = httpx.post(self.url, json=args, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise BindingError(f"http binding failed: {exc}") from exc
        if response.status_code >= 400:
            raise BindingError(f"http binding returned {response.status_code}")
        try:
            return response.json()
        except ValueError:
            return response.text


class ToolHost:
    """Binding table plus the append-only invocation log."""

    def __init__(self, fixtures: FixtureStore | None = None):
        self.fixtures = fixtures or FixtureStore()
        self._bindings: dict[str, Binding] = {}
        self._records: dict[str, list[InvocationRecord]] = {}
        self._session_executions: dict[str, list[str]] = {}
        self._log_lock = threading.Lock()
        self._observer: Callable[[InvocationRecord, str], None] | None = None

    def set_observer(self, observer: Callable[[InvocationRecord, str], None]) -> None:
        """Called with (record, session_id) after each append; used by the
        runtime to mirror invocations into the session trajectory."""
        self._observer = observer

    # -- binding management ---------------------------------------------------

    def bind(self, tool_name: str, binding: Binding) -> None:
        self._bindings[tool_name] = binding

    def bind_from_spec(self, tool_name: str, spec: dict[str, Any]) -> None:
        kind = spec.get("kind")
        if kind == "fixture":
            target = spec.get("target", "")
            factory = _FIXTURE_BINDINGS.get(target)
            if factory is None:
                raise BindingError(f"unknown fixture binding target {target!r}")
            self.bind(tool_name, factory(self.fixtures))
        elif kind == "http":
            url = spec.get("url")
            if not url:
                raise BindingError(f"http binding for {tool_name!r} needs a url")
            self.bind(tool_name, HttpBinding(url))
        elif kind in (None, "unbound"):
            pass  # tool is declared but intentionally left unbound
        else:
            raise BindingError(f"unknown binding kind {kind!r}")

    def is_bound(self, tool_name: str) -> bool:
        return tool_name in self._bindings

    # -- dispatch ---------------------------------------------------------------

    def invoke(self, tool: str, args: dict[str, Any], ctx: ExecutionContext) -> Any:
        """Run the binding; the record is written whatever the outcome."""
        try:
            if tool not in ctx.loaded_tools:
                raise NotLoaded(tool)
            binding = self._bindings.get(tool)
            if binding is None:
                raise UnboundTool(tool)
            result = binding(args, ctx.session_id)
        except ToolError as exc:
            self._record(ctx, tool, args, ok=False, result=None, error=exc)
            raise
        except Exception as exc:
            wrapped = BindingError(f"{type(exc).__name__}: {exc}")
            self._record(ctx, tool, args, ok=False, result=None, error=wrapped)
            raise wrapped from exc
        self._record(ctx, tool, args, ok=True, result=result, error=None)
        return result

    def _record(
        self,
        ctx: ExecutionContext,
        tool: str,
        args: dict[str, Any],
        *,
        ok: bool,
        result: Any,
        error: ToolError | None,
    ) -> None:
        with self._log_lock:
            records = self._records.setdefault(ctx.execution_id, [])
            record = InvocationRecord(
                invocation_id=uuid.uuid4().hex,
                execution_id=ctx.execution_id,
                tool=tool,
                args=args,
                ok=ok,
                result=result,
                error_kind=error.kind if error else None,
                error_message=error.message if error else None,
                sequence_index=len(records),
                at=datetime.now(timezone.utc).isoformat(),
            )
            records.append(record)
            executions = self._session_executions.setdefault(ctx.session_id, [])
            if ctx.execution_id not in executions:
                executions.append(ctx.execution_id)
        if self._observer is not None:
            self._observer(record, ctx.session_id)

    # -- log access ---------------------------------------------------------------

    def records_for(self, execution_id: str) -> list[InvocationRecord]:
        with self._log_lock:
            return list(self._records.get(execution_id, ()))

    def session_records(self, session_id: str) -> list[InvocationRecord]:
        with self._log_lock:
            out: list[InvocationRecord] = []
            for execution_id in self._session_executions.get(session_id, ()):
                out.extend(self._records.get(execution_id, ()))
            return out


# -- fixture binding targets -------------------------------------------------


def _outlook_list_emails(fixtures: FixtureStore) -> Binding:
    def binding(args: dict[str, Any], session_id: str) -> Any:
        state = fixtures.require(session_id)
        return state.list_emails(str(args.get("filter", "")))

    return binding


def _outlook_get_attachment(fixtures: FixtureStore) -> Binding:
    def binding(args: dict[str, Any], session_id: str) -> Any:
        state = fixtures.require(session_id)
        email_id = args.get("email_id")
        if not isinstance(email_id, str):
            raise ToolError("bad_args", "email_id must be a string")
        index = args.get("index", 0)
        if not isinstance(index, int) or isinstance(index, bool):
            raise ToolError("bad_args", "index must be an integer")
        return state.get_attachment(email_id, index)

    return binding


def _onedrive_upload_file(fixtures: FixtureStore) -> Binding:
    def binding(args: dict[str, Any], session_id: str) -> Any:
        state = fixtures.require(session_id)
        result = state.upload_file(args.get("path"), args.get("content"))
        fixtures.note_mutation(session_id)
        return result

    return binding


_FIXTURE_BINDINGS: dict[str, Callable[[FixtureStore], Binding]] = {
    "outlook_list_emails": _outlook_list_emails,
    "outlook_get_attachment": _outlook_get_attachment,
    "onedrive_upload_file": _onedrive_upload_file,
}
