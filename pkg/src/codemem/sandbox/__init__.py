"""Sandboxed script execution with an authenticated loopback RPC bridge."""

from .bridge import BridgeServer
from .executor import (
    ExecutionRequest,
    ExecutionResult,
    InterpreterNotFound,
    Limits,
    SandboxExecutor,
)
from .preamble import NameCollision, generate_preamble

__all__ = [
    "BridgeServer",
    "ExecutionRequest",
    "ExecutionResult",
    "InterpreterNotFound",
    "Limits",
    "NameCollision",
    "SandboxExecutor",
    "generate_preamble",
]
