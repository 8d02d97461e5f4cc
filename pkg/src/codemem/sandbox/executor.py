"""Child-process script execution with wall-clock, output, and call limits.

Each execution gets a fresh temp directory, a fresh bridge listener on an
ephemeral loopback port, and a fresh 128-bit auth token; the child learns
both through environment variables. Captured output keeps the tail (what
debugging needs) and the LLM-visible form of a result is only that tail
plus a deterministic exit summary — never raw tool payloads.
"""

from __future__ import annotations

import os
import secrets
import shutil
import subprocess
import sys
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from ..errors import CodeMemError
from .bridge import BridgeServer, Dispatch

ENV_BRIDGE_ADDR = "CODEMEM_BRIDGE_ADDR"
ENV_BRIDGE_TOKEN = "CODEMEM_BRIDGE_TOKEN"
ENV_EXECUTION_ID = "CODEMEM_EXECUTION_ID"
ENV_NOW = "CODEMEM_NOW"

KILL_AUTH = "bridge_auth_failure"
KILL_LIMIT = "bridge_call_limit"


class InterpreterNotFound(CodeMemError):
    pass


@dataclass(frozen=True)
class Limits:
    wall_timeout: float = 120.0
    max_output: int = 65536
    max_bridge_calls: int = 1000

    def __post_init__(self) -> None:
        if self.wall_timeout <= 0 or self.max_output <= 0 or self.max_bridge_calls <= 0:
            raise ValueError("all limits must be positive")


@dataclass(frozen=True)
class ExecutionRequest:
    session_id: str
    source: str
    loaded_tools: tuple[str, ...] = ()
    loaded_skills: tuple[tuple[str, int], ...] = ()
    limits: Limits = field(default_factory=Limits)
    clock: str | None = None  # ISO timestamp exported as CODEMEM_NOW


@dataclass(frozen=True)
class ExecutionResult:
    execution_id: str
    exit_status: str  # success | nonzero | timeout | killed
    exit_code: int | None
    stdout_tail: str
    bridge_calls: tuple[str, ...]
    bridge_call_count: int
    wall_time: float
    started_at: str
    kill_reason: str | None = None

    @property
    def success(self) -> bool:
        return self.exit_status == "success"

    def exit_summary(self) -> str:
        if self.exit_status == "nonzero":
            status = f"nonzero({self.exit_code})"
        elif self.exit_status == "killed" and self.kill_reason:
            status = f"killed ({self.kill_reason})"
        else:
            status = self.exit_status
        return f"[exit: {status}, bridge calls: {self.bridge_call_count}]"

    def visible_text(self) -> str:
        """Exactly what the LLM is shown for this execution."""
        tail = self.stdout_tail
        if tail and not tail.endswith("\n"):
            tail += "\n"
        return tail + self.exit_summary()

    def with_bridge_calls(self, invocation_ids: list[str]) -> "ExecutionResult":
        return replace(self, bridge_calls=tuple(invocation_ids))


class _TailBuffer:
    """Keeps the last `limit` bytes of a stream plus a dropped-byte count."""

    def __init__(self, limit: int):
        self._limit = limit
        self._buf = bytearray()
        self.dropped = 0

    def feed(self, chunk: bytes) -> None:
        self._buf.extend(chunk)
        overflow = len(self._buf) - self._limit
        if overflow > 0:
            del self._buf[:overflow]
            self.dropped += overflow

    def text(self) -> str:
        body = self._buf.decode("utf-8", errors="replace")
        if self.dropped:
            return f"[truncated {self.dropped} bytes]\n" + body
        return body


class SandboxExecutor:
    def __init__(self, interpreter: list[str] | None = None):
        self.interpreter = list(interpreter) if interpreter else [sys.executable]

    def check_interpreter(self) -> str:
        """Resolve the interpreter executable; raises InterpreterNotFound."""
        cmd = self.interpreter[0]
        resolved = cmd if os.path.isabs(cmd) and os.path.exists(cmd) else shutil.which(cmd)
        if not resolved:
            raise InterpreterNotFound(f"interpreter not found: {cmd!r}")
        return resolved

    def execute(
        self,
        request: ExecutionRequest,
        preamble: str,
        dispatch: Dispatch,
        execution_id: str | None = None,
    ) -> ExecutionResult:
        self.check_interpreter()
        execution_id = execution_id or uuid.uuid4().hex
        token = secrets.token_hex(16)
        server = BridgeServer(token, dispatch, max_calls=request.limits.max_bridge_calls)
        started_at = datetime.now(timezone.utc).isoformat()
        tail = _TailBuffer(request.limits.max_output)
        tmpdir = tempfile.mkdtemp(prefix="codemem-exec-")
        try:
            script = Path(tmpdir) / "script.py"
            script.write_text(preamble + "\n" + request.source, encoding="utf-8")
            env = dict(os.environ)
            env[ENV_BRIDGE_ADDR] = server.address
            env[ENV_BRIDGE_TOKEN] = token
            env[ENV_EXECUTION_ID] = execution_id
            if request.clock:
                env[ENV_NOW] = request.clock
            else:
                env.pop(ENV_NOW, None)

            start = time.monotonic()
            # Run by relative name so tracebacks print a stable "script.py"
            # path; absolute temp paths would make failure output differ
            # between otherwise identical executions.
            proc = subprocess.Popen(
                [*self.interpreter, script.name],
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                cwd=tmpdir,
                env=env,
            )
            reader = threading.Thread(
                target=self._drain, args=(proc.stdout, tail), daemon=True
            )
            reader.start()

            exit_status = "success"
            kill_reason: str | None = None
            deadline = start + request.limits.wall_timeout
            while True:
                code = proc.poll()
                if code is not None:
                    exit_status = "success" if code == 0 else "nonzero"
                    break
                if server.auth_failed.is_set():
                    proc.kill()
                    proc.wait()
                    exit_status, kill_reason = "killed", KILL_AUTH
                    break
                if server.limit_exceeded.is_set():
                    proc.kill()
                    proc.wait()
                    exit_status, kill_reason = "killed", KILL_LIMIT
                    break
                if time.monotonic() >= deadline:
                    proc.kill()
                    proc.wait()
                    exit_status = "timeout"
                    break
                time.sleep(0.01)
            wall_time = time.monotonic() - start
            reader.join(timeout=5)
            exit_code = proc.returncode if exit_status in ("success", "nonzero") else None
            return ExecutionResult(
                execution_id=execution_id,
                exit_status=exit_status,
                exit_code=exit_code,
                stdout_tail=tail.text(),
                bridge_calls=(),
                bridge_call_count=server.calls_made,
                wall_time=wall_time,
                started_at=started_at,
                kill_reason=kill_reason,
            )
        finally:
            server.close()
            shutil.rmtree(tmpdir, ignore_errors=True)

    @staticmethod
    def _drain(stream, tail: _TailBuffer) -> None:
        for chunk in iter(lambda: stream.read(8192), b""):
            tail.feed(chunk)
        stream.close()
