"""Generates the script preamble injected ahead of sandboxed source.

The preamble is pure text: a self-contained bridge bootstrap (connect,
authenticate, `call_tool`, `workflow_now`), one async stub per loaded tool
so generated code can `await outlook__list_emails(...)` naturally, and each
loaded skill's source inlined verbatim so its entrypoint is callable by
name. Generation is a pure function of its inputs.
"""

from __future__ import annotations

import json
import keyword
from typing import TYPE_CHECKING, Any

from ..errors import CodeMemError
from ..registry import ToolSchema

if TYPE_CHECKING:
    from ..skillbank import Skill


class NameCollision(CodeMemError):
    pass


BOOTSTRAP = '''\
# codemem sandbox preamble (generated; do not edit)
import json as _cm_json
import os as _cm_os
import socket as _cm_socket
import sys as _cm_sys
from datetime import datetime as _cm_datetime, timezone as _cm_timezone


class ToolCallError(Exception):
    """A tool call came back as an error frame; branchable by kind."""

    def __init__(self, kind, message):
        super().__init__("%s: %s" % (kind, message))
        self.kind = kind
        self.message = message


class _CmBridgeClient:
    def __init__(self):
        self._sock = None
        self._reader = None
        self._token = None
        self._next_id = 1
        self._responses = {}

    def _connect(self):
        addr = _cm_os.environ.get("CODEMEM_BRIDGE_ADDR")
        token = _cm_os.environ.get("CODEMEM_BRIDGE_TOKEN")
        if not addr or not token:
            _cm_sys.stderr.write(
                "codemem bridge: CODEMEM_BRIDGE_ADDR and CODEMEM_BRIDGE_TOKEN "
                "must be set\\n"
            )
            raise SystemExit(3)
        host, _, port = addr.rpartition(":")
        self._token = token
        self._sock = _cm_socket.create_connection((host, int(port)))
        self._reader = self._sock.makefile("rb")

    def call(self, tool, args):
        if self._sock is None:
            self._connect()
        req_id = self._next_id
        self._next_id += 1
        frame = {"args": args, "id": req_id, "token": self._token, "tool": tool}
        data = (_cm_json.dumps(frame, sort_keys=True, separators=(",", ":")) + "\\n").encode("utf-8")
        try:
            self._sock.sendall(data)
            while req_id not in self._responses:
                line = self._reader.readline()
                if not line:
                    raise ConnectionError("bridge connection closed")
                response = _cm_json.loads(line)
                self._responses[response.get("id")] = response
        except (OSError, ConnectionError) as exc:
            _cm_sys.stderr.write("codemem bridge: transport failure: %s\\n" % (exc,))
            raise SystemExit(3)
        response = self._responses.pop(req_id)
        if response.get("ok"):
            return response.get("result")
        error = response.get("error") or {}
        raise ToolCallError(error.get("kind", "unknown"), error.get("message", ""))


_cm_bridge = _CmBridgeClient()


def call_tool(tool, args=None):
    """Send one request frame and block for its matching response."""
    return _cm_bridge.call(tool, dict(args or {}))


def workflow_now():
    """Reproducible clock: the runtime pins CODEMEM_NOW for fixture runs."""
    raw = _cm_os.environ.get("CODEMEM_NOW")
    if raw:
        ts = _cm_datetime.fromisoformat(raw.replace("Z", "+00:00"))
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=_cm_timezone.utc)
        return ts
    return _cm_datetime.now(_cm_timezone.utc)
'''


def _stub_for(schema: ToolSchema) -> str:
    name = schema.descriptor.name
    params = list(schema.parameters.get("properties", {}))
    usable = (
        name.isidentifier()
        and not keyword.iskeyword(name)
        and all(p.isidentifier() and not keyword.iskeyword(p) for p in params)
    )
    if not usable:
        return (
            f'async def _cm_stub(**kwargs):\n'
            f'    return call_tool("{name}", {{k: v for k, v in kwargs.items() if v is not None}})\n'
            f'globals()["{name}"] = _cm_stub\n'
            f'del _cm_stub\n'
        )
    arglist = ", ".join(f"{p}=None" for p in params)
    lines = [f"async def {name}({arglist}):"]
    lines.append("    _cm_args = {}")
    for p in params:
        lines.append(f"    if {p} is not None:")
        lines.append(f'        _cm_args["{p}"] = {p}')
    lines.append(f'    return call_tool("{name}", _cm_args)')
    return "\n".join(lines) + "\n"


def generate_preamble(
    loaded_tools: list[ToolSchema], loaded_skills: list["Skill"]
) -> str:
    """Build the full preamble text; byte-identical for identical inputs."""
    tool_names = [s.descriptor.name for s in loaded_tools]
    taken = set(tool_names)
    for skill in loaded_skills:
        if skill.entrypoint in taken:
            raise NameCollision(
                f"skill entrypoint {skill.entrypoint!r} ({skill.name} "
                f"v{skill.version}) shadows another sandbox name"
            )
        taken.add(skill.entrypoint)

    parts = [BOOTSTRAP]
    if loaded_tools:
        parts.append("\n# --- tool stubs ---\n")
        for schema in loaded_tools:
            parts.append("\n" + _stub_for(schema))
    for skill in loaded_skills:
        parts.append(f"\n# --- skill: {skill.name} v{skill.version} ---\n")
        source = skill.source
        if not source.endswith("\n"):
            source += "\n"
        parts.append(source)
    return "".join(parts)


def entrypoint_call_stub(entrypoint: str, arguments: dict[str, Any]) -> str:
    """Driver-free invocation appended below a skill for the reuse fast path."""
    encoded = json.dumps(arguments, sort_keys=True)
    return (
        "\n# --- skill invocation (generated) ---\n"
        f"_cm_result = {entrypoint}(**_cm_json.loads({encoded!r}))\n"
        "import inspect as _cm_inspect\n"
        "if _cm_inspect.iscoroutine(_cm_result):\n"
        "    import asyncio as _cm_asyncio\n"
        "    _cm_result = _cm_asyncio.run(_cm_result)\n"
        "if _cm_result is not None:\n"
        "    print(_cm_json.dumps(_cm_result, sort_keys=True, default=str))\n"
    )
