"""Loopback TCP listener answering bridge frames from the sandboxed child.

Frames are authenticated with a per-execution token. A frame carrying the
wrong token is answered with an auth error and flags the execution for
termination before any dispatch happens, so a hostile child never reaches
the tool host. Call-count limits are enforced here for the same reason.
"""

from __future__ import annotations

import socket
import threading
from typing import Any, Callable

from .. import frames
from ..toolerrors import ToolError

# dispatch(tool, args) -> result document; raises ToolError on tool failure
Dispatch = Callable[[str, dict[str, Any]], Any]


class BridgeServer:
    def __init__(self, token: str, dispatch: Dispatch, max_calls: int = 1000):
        self._token = token
        self._dispatch = dispatch
        self._max_calls = max_calls
        self._calls = 0
        self._lock = threading.Lock()
        self.auth_failed = threading.Event()
        self.limit_exceeded = threading.Event()

        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.listen(8)
        self._closing = False
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    @property
    def address(self) -> str:
        host, port = self._sock.getsockname()
        return f"{host}:{port}"

    @property
    def calls_made(self) -> int:
        return self._calls

    def close(self) -> None:
        self._closing = True
        try:
            self._sock.close()
        except OSError:
            pass

    # -- internals -------------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_connection, args=(conn,), daemon=True).start()

    def _serve_connection(self, conn: socket.socket) -> None:
        try:
            with conn, conn.makefile("rb") as reader:
                for line in reader:
                    if not line.strip():
                        continue
                    response = self._handle_line(line)
                    try:
                        conn.sendall(frames.encode(response))
                    except OSError:
                        return
        except OSError:
            pass

    def _handle_line(self, line: bytes) -> dict[str, Any]:
        try:
            frame = frames.decode(line)
        except frames.FrameError as exc:
            return frames.error_response(None, "protocol", str(exc))
        raw_id = frame.get("id")
        req_id = raw_id if isinstance(raw_id, int) and not isinstance(raw_id, bool) else None
        try:
            frames.validate_request(frame)
        except frames.FrameError as exc:
            return frames.error_response(req_id, "protocol", str(exc))

        if frame["token"] != self._token:
            self.auth_failed.set()
            return frames.error_response(frame["id"], "auth", "invalid bridge token")

        with self._lock:
            if self._calls >= self._max_calls:
                self.limit_exceeded.set()
                return frames.error_response(
                    frame["id"], "limit", f"bridge call limit ({self._max_calls}) exceeded"
                )
            self._calls += 1

        try:
            result = self._dispatch(frame["tool"], frame["args"])
        except ToolError as exc:
            return frames.error_response(frame["id"], exc.kind, exc.message)
        except Exception as exc:  # dispatch bug; keep the child informed
            return frames.error_response(frame["id"], "internal", f"{type(exc).__name__}: {exc}")
        return frames.ok_response(frame["id"], result)
