"""Tool manifest store with deterministic search and just-in-time schema loading.

The registry holds lightweight descriptors (name + summary + tags) for every
known tool and hands out full schemas only when asked by name. Search is
plain lexical token overlap, so the result for a given (registry, query, k)
never changes between runs and never grows with registry size.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import CodeMemError

NAME_PATTERN = re.compile(r"[a-z0-9_]+(__[a-z0-9_]+)?")
MAX_SUMMARY_CHARS = 200
DEFAULT_SEARCH_K = 5

_PARAM_TYPES = {"string", "integer", "number", "boolean", "object", "array"}
_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


class ParseError(CodeMemError):
    """Manifest document is malformed or violates a descriptor invariant."""


class DuplicateName(CodeMemError):
    def __init__(self, names: Iterable[str]):
        self.names = sorted(names)
        super().__init__(f"tool names already registered: {', '.join(self.names)}")


class EmptyRegistry(CodeMemError):
    """Search was issued against a registry with no tools."""


class UnknownTool(CodeMemError):
    def __init__(self, names: Iterable[str]):
        self.names = sorted(names)
        super().__init__(f"unknown tools: {', '.join(self.names)}")


def tokenize(text: str) -> set[str]:
    """Lowercase and split on non-alphanumeric runs; `__` separates too."""
    return {t for t in _TOKEN_SPLIT.split(text.lower()) if t}


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    summary: str
    tags: frozenset[str]
    binding_ref: str


@dataclass(frozen=True)
class ToolSchema:
    descriptor: ToolDescriptor
    long_description: str
    parameters: dict[str, Any]
    returns: str


@dataclass
class _Entry:
    schema: ToolSchema
    binding: dict[str, Any]
    name_tokens: set[str] = field(default_factory=set)
    summary_tokens: set[str] = field(default_factory=set)


def _validate_parameters(name: str, params: Any) -> None:
    if not isinstance(params, dict) or params.get("type") != "object":
        raise ParseError(f"{name}: parameters must be an object schema")
    props = params.get("properties", {})
    if not isinstance(props, dict):
        raise ParseError(f"{name}: parameters.properties must be a mapping")
    for pname, pschema in props.items():
        if not isinstance(pschema, dict) or pschema.get("type") not in _PARAM_TYPES:
            raise ParseError(f"{name}: parameter {pname!r} has no valid type")
    required = params.get("required", [])
    if not isinstance(required, list) or any(r not in props for r in required):
        raise ParseError(f"{name}: required list names unknown parameters")


def _binding_ref(binding: dict[str, Any]) -> str:
    kind = binding.get("kind", "unbound")
    target = binding.get("target") or binding.get("url") or ""
    return f"{kind}:{target}"


class ToolRegistry:
    """Shared, import-once tool store. Reads work on a consistent snapshot."""

    def __init__(self) -> None:
        self._entries: dict[str, _Entry] = {}
        self._import_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> set[str]:
        return set(self._entries)

    def import_manifest(self, manifest: str | dict[str, Any]) -> int:
        """Import every tool in the manifest atomically; returns the count.

        A single bad entry or name collision rejects the whole document.
        """
        if isinstance(manifest, str):
            try:
                manifest = json.loads(manifest)
            except json.JSONDecodeError as exc:
                raise ParseError(f"manifest is not valid JSON: {exc}") from exc
        if not isinstance(manifest, dict) or not isinstance(manifest.get("tools"), list):
            raise ParseError("manifest must be an object with a 'tools' list")

        with self._import_lock:
            staged: dict[str, _Entry] = {}
            for raw in manifest["tools"]:
                entry = self._parse_tool(raw)
                name = entry.schema.descriptor.name
                if name in staged:
                    raise DuplicateName([name])
                staged[name] = entry
            collisions = set(staged) & set(self._entries)
            if collisions:
                raise DuplicateName(collisions)
            # Replace the dict reference so concurrent readers keep a
            # consistent snapshot without locking.
            merged = dict(self._entries)
            merged.update(staged)
            self._entries = merged
            return len(staged)

    def _parse_tool(self, raw: Any) -> _Entry:
        if not isinstance(raw, dict):
            raise ParseError("tool entry must be an object")
        name = raw.get("name")
        if not isinstance(name, str) or not NAME_PATTERN.fullmatch(name):
            raise ParseError(f"invalid tool name: {name!r}")
        summary = raw.get("summary")
        if not isinstance(summary, str) or not summary:
            raise ParseError(f"{name}: summary is required")
        if len(summary) > MAX_SUMMARY_CHARS:
            raise ParseError(f"{name}: summary exceeds {MAX_SUMMARY_CHARS} characters")
        tags = raw.get("tags", [])
        if not isinstance(tags, list) or any(not isinstance(t, str) for t in tags):
            raise ParseError(f"{name}: tags must be a list of strings")
        parameters = raw.get("parameters", {"type": "object", "properties": {}})
        _validate_parameters(name, parameters)
        binding = raw.get("binding", {})
        if not isinstance(binding, dict):
            raise ParseError(f"{name}: binding must be an object")

        descriptor = ToolDescriptor(
            name=name,
            summary=summary,
            tags=frozenset(t.lower() for t in tags),
            binding_ref=_binding_ref(binding),
        )
        schema = ToolSchema(
            descriptor=descriptor,
            long_description=str(raw.get("long_description", summary)),
            parameters=parameters,
            returns=str(raw.get("returns", "")),
        )
        return _Entry(
            schema=schema,
            binding=binding,
            name_tokens=tokenize(name),
            summary_tokens=tokenize(summary),
        )

    def search_functions(self, query: str, k: int = DEFAULT_SEARCH_K) -> list[ToolDescriptor]:
        """Rank tools by token overlap: 3x name, 2x tags, 1x summary.

        Zero-score tools are dropped; ties break on ascending name. The result
        is a pure function of (registry contents, query, k).
        """
        entries = self._entries
        if not entries:
            raise EmptyRegistry("no tools imported")
        if k < 1:
            raise ValueError("k must be >= 1")
        qtokens = tokenize(query)
        scored: list[tuple[int, str, ToolDescriptor]] = []
        for name, entry in entries.items():
            d = entry.schema.descriptor
            score = (
                3 * len(qtokens & entry.name_tokens)
                + 2 * len(qtokens & d.tags)
                + 1 * len(qtokens & entry.summary_tokens)
            )
            if score > 0:
                scored.append((score, name, d))
        scored.sort(key=lambda item: (-item[0], item[1]))
        return [d for _, _, d in scored[:k]]

    def get_schemas(self, names: list[str]) -> list[ToolSchema]:
        """Resolve full schemas for the given names; all-or-nothing."""
        entries = self._entries
        missing = [n for n in names if n not in entries]
        if missing:
            raise UnknownTool(missing)
        return [entries[n].schema for n in names]

    def schema(self, name: str) -> ToolSchema:
        return self.get_schemas([name])[0]

    def binding_spec(self, name: str) -> dict[str, Any]:
        entry = self._entries.get(name)
        if entry is None:
            raise UnknownTool([name])
        return entry.binding
