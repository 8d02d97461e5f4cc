"""Bridge frame codec: newline-delimited, canonically encoded JSON.

One request frame per tool call from the sandboxed script:

    {"args": {...}, "id": 1, "token": "<hex>", "tool": "name"}\n

answered by exactly one response frame:

    {"id": 1, "ok": true, "result": ...}\n
    {"id": 1, "ok": false, "error": {"kind": "...", "message": "..."}}\n

Canonical encoding is compact separators with sorted keys, UTF-8, one frame
per line. Both sides of the bridge (the runtime listener and the in-sandbox
shim) are held to this module's rules by a shared test-vector file.
"""

from __future__ import annotations

import json
from typing import Any

from .errors import CodeMemError


class FrameError(CodeMemError):
    """A line on the bridge socket is not a valid frame."""


def encode(frame: dict[str, Any]) -> bytes:
    """Serialize a frame to its canonical wire form, newline included."""
    return (json.dumps(frame, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def decode(line: bytes | str) -> dict[str, Any]:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    try:
        frame = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FrameError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(frame, dict):
        raise FrameError("frame must be a JSON object")
    return frame


def validate_request(frame: dict[str, Any]) -> None:
    """Check the request shape; raises FrameError naming the first problem."""
    if not isinstance(frame.get("id"), int) or isinstance(frame.get("id"), bool):
        raise FrameError("request 'id' must be an integer")
    if not isinstance(frame.get("tool"), str) or not frame["tool"]:
        raise FrameError("request 'tool' must be a nonempty string")
    if not isinstance(frame.get("args"), dict):
        raise FrameError("request 'args' must be an object")
    if not isinstance(frame.get("token"), str):
        raise FrameError("request 'token' must be a string")


def request(req_id: int, tool: str, args: dict[str, Any], token: str) -> dict[str, Any]:
    return {"args": args, "id": req_id, "token": token, "tool": tool}


def ok_response(req_id: int, result: Any) -> dict[str, Any]:
    return {"id": req_id, "ok": True, "result": result}


def error_response(req_id: int | None, kind: str, message: str) -> dict[str, Any]:
    return {"id": req_id, "ok": False, "error": {"kind": kind, "message": message}}
