"""Bridge client for sandboxed scripts.

Connects to the runtime's loopback listener using the address and token
from the environment, and exposes each hosted tool through `call_tool`.
Wire format: newline-delimited JSON frames, canonically encoded (sorted
keys, compact separators); see docs/bridge-protocol.md in the runtime
repository. Tool failures surface as catchable ToolCallError; transport
failures abort the script with a nonzero exit, since a script without its
bridge cannot do anything useful.
"""

from __future__ import annotations

import json
import os
import socket
import sys
from typing import Any

ENV_ADDR = "CODEMEM_BRIDGE_ADDR"
ENV_TOKEN = "CODEMEM_BRIDGE_TOKEN"

__all__ = ["BridgeClient", "ToolCallError", "call_tool"]


class ToolCallError(Exception):
    """The runtime answered with an error frame; `kind` is machine-readable."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.message = message


def _encode(frame: dict[str, Any]) -> bytes:
    return (json.dumps(frame, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


class BridgeClient:
    """One client per execution; request ids are a monotone counter from 1."""

    def __init__(self, address: str | None = None, token: str | None = None):
        address = address or os.environ.get(ENV_ADDR)
        token = token or os.environ.get(ENV_TOKEN)
        if not address or not token:
            sys.stderr.write(
                f"codemem-shim: {ENV_ADDR} and {ENV_TOKEN} must be set; "
                "this module only works inside a codemem sandbox execution\n"
            )
            raise SystemExit(3)
        self._address = address
        self._token = token
        self._sock: socket.socket | None = None
        self._reader = None
        self._next_id = 1
        self._responses: dict[Any, dict[str, Any]] = {}

    def _connect(self) -> None:
        host, _, port = self._address.rpartition(":")
        try:
            self._sock = socket.create_connection((host, int(port)))
        except OSError as exc:
            sys.stderr.write(f"codemem-shim: cannot reach bridge at {self._address}: {exc}\n")
            raise SystemExit(3) from exc
        self._reader = self._sock.makefile("rb")

    def call_tool(self, tool: str, args: dict[str, Any] | None = None) -> Any:
        """Send exactly one request frame and block for its matching response."""
        if self._sock is None:
            self._connect()
        req_id = self._next_id
        self._next_id += 1
        frame = {"args": dict(args or {}), "id": req_id, "token": self._token, "tool": tool}
        try:
            self._sock.sendall(_encode(frame))
            while req_id not in self._responses:
                line = self._reader.readline()
                if not line:
                    raise ConnectionError("bridge connection closed")
                response = json.loads(line)
                self._responses[response.get("id")] = response
        except (OSError, ConnectionError) as exc:
            sys.stderr.write(f"codemem-shim: transport failure: {exc}\n")
            raise SystemExit(3) from exc
        response = self._responses.pop(req_id)
        if response.get("ok"):
            return response.get("result")
        error = response.get("error") or {}
        raise ToolCallError(error.get("kind", "unknown"), error.get("message", ""))

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None


_client: BridgeClient | None = None


def call_tool(tool: str, args: dict[str, Any] | None = None) -> Any:
    """Module-level convenience over a process-wide client."""
    global _client
    if _client is None:
        _client = BridgeClient()
    return _client.call_tool(tool, args)
