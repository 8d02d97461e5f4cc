"""Tool-call failures that travel back over the bridge as error frames."""

from __future__ import annotations

from .errors import CodeMemError


class ToolError(CodeMemError):
    """A tool invocation failed; `kind` is the machine-readable error class."""

    def __init__(self, kind: str, message: str):
        self.kind = kind
        self.message = message
        super().__init__(f"{kind}: {message}")


class UnboundTool(ToolError):
    def __init__(self, name: str):
        super().__init__("unbound_tool", f"no binding for tool {name!r}")


class NotLoaded(ToolError):
    def __init__(self, name: str):
        super().__init__(
            "not_loaded",
            f"tool {name!r} exists but was not loaded in this session; "
            "call load_functions first",
        )


class BindingError(ToolError):
    def __init__(self, message: str):
        super().__init__("binding_error", message)
