"""Procedural memory bank: immutable, versioned, content-hashed skill storage.

Each registered skill version is frozen to disk as a source file plus a
metadata sidecar and is never rewritten. Versions are dense integers per
name; the latest version is what search and default lookups see.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from .errors import CodeMemError
from .registry import UnknownTool, tokenize

DEFAULT_ENTRYPOINT = "agent_main"


class UnknownSkill(CodeMemError):
    pass


class UnknownVersion(CodeMemError):
    pass


class EmptySource(CodeMemError):
    pass


class EntrypointMissing(CodeMemError):
    pass


class ValidationMissing(CodeMemError):
    pass


@dataclass(frozen=True)
class ValidationRecord:
    session_id: str
    execution_id: str
    user_confirmed: bool


@dataclass(frozen=True)
class Skill:
    name: str
    version: int
    source: str
    entrypoint: str
    signature: str
    description: str
    required_tools: tuple[str, ...]
    validation: ValidationRecord
    content_hash: str
    created_at: str
    deprecated: bool = False


def content_hash(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


def _entrypoint_defined(source: str, entrypoint: str) -> bool:
    pattern = re.compile(
        rf"^[ \t]*(async[ \t]+)?def[ \t]+{re.escape(entrypoint)}[ \t]*\(", re.MULTILINE
    )
    return pattern.search(source) is not None


# Resolves (session_id, execution_id) to an exit status string, or None when
# the execution is unknown. Wired to the trajectory store by the runtime.
ExecutionResolver = Callable[[str, str], "str | None"]


class SkillBank:
    """Append-only skill store rooted at ``<root>/skills``."""

    def __init__(
        self,
        root: Path,
        *,
        execution_resolver: ExecutionResolver | None = None,
        registry_names: Callable[[], set[str]] | None = None,
    ):
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._execution_resolver = execution_resolver
        self._registry_names = registry_names

    def _skill_dir(self, name: str) -> Path:
        return self._root / name

    def _versions(self, name: str) -> list[int]:
        skill_dir = self._skill_dir(name)
        if not skill_dir.is_dir():
            return []
        versions = sorted(
            int(p.stem[1:]) for p in skill_dir.glob("v*.code") if p.stem[1:].isdigit()
        )
        if versions and versions != list(range(1, versions[-1] + 1)):
            raise CodeMemError(f"skill {name!r} has a gap in its version sequence")
        return versions

    def register_skill(
        self,
        name: str,
        description: str,
        source: str,
        entrypoint: str = DEFAULT_ENTRYPOINT,
        signature: str = "",
        required_tools: list[str] | None = None,
        validation: ValidationRecord | None = None,
    ) -> Skill:
        if not source or not source.strip():
            raise EmptySource("skill source must be nonempty")
        if not _entrypoint_defined(source, entrypoint):
            raise EntrypointMissing(f"source defines no function named {entrypoint!r}")
        if validation is None:
            raise ValidationMissing("a validation record is required")
        if self._execution_resolver is not None:
            status = self._execution_resolver(validation.session_id, validation.execution_id)
            if status != "success":
                raise ValidationMissing(
                    f"execution {validation.execution_id!r} is not a successful "
                    f"execution of session {validation.session_id!r} (status: {status})"
                )
        required = tuple(required_tools or ())
        if self._registry_names is not None:
            missing = set(required) - self._registry_names()
            if missing:
                raise UnknownTool(missing)

        with self._lock:
            version = (self._versions(name) or [0])[-1] + 1
            skill = Skill(
                name=name,
                version=version,
                source=source,
                entrypoint=entrypoint,
                signature=signature or f"{entrypoint}()",
                description=description,
                required_tools=required,
                validation=validation,
                content_hash=content_hash(source),
                created_at=datetime.now(timezone.utc).isoformat(),
            )
            self._write(skill)
            return skill

    def _write(self, skill: Skill) -> None:
        skill_dir = self._skill_dir(skill.name)
        skill_dir.mkdir(parents=True, exist_ok=True)
        code_path = skill_dir / f"v{skill.version}.code"
        meta_path = skill_dir / f"v{skill.version}.meta.json"
        if code_path.exists() or meta_path.exists():
            raise CodeMemError(f"{skill.name} v{skill.version} already exists")
        meta = {
            "name": skill.name,
            "version": skill.version,
            "entrypoint": skill.entrypoint,
            "signature": skill.signature,
            "description": skill.description,
            "required_tools": list(skill.required_tools),
            "validation": {
                "session_id": skill.validation.session_id,
                "execution_id": skill.validation.execution_id,
                "user_confirmed": skill.validation.user_confirmed,
            },
            "content_hash": skill.content_hash,
            "created_at": skill.created_at,
            "deprecated": skill.deprecated,
        }
        tmp = code_path.with_suffix(".code.tmp")
        tmp.write_text(skill.source, encoding="utf-8")
        tmp.replace(code_path)
        tmp = meta_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(meta, indent=2), encoding="utf-8")
        tmp.replace(meta_path)

    def _read(self, name: str, version: int) -> Skill:
        skill_dir = self._skill_dir(name)
        code_path = skill_dir / f"v{version}.code"
        meta_path = skill_dir / f"v{version}.meta.json"
        if not code_path.exists():
            raise UnknownVersion(f"{name} has no version {version}")
        source = code_path.read_text(encoding="utf-8")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if content_hash(source) != meta["content_hash"]:
            raise CodeMemError(f"stored source for {name} v{version} fails its hash check")
        return Skill(
            name=name,
            version=version,
            source=source,
            entrypoint=meta["entrypoint"],
            signature=meta["signature"],
            description=meta["description"],
            required_tools=tuple(meta["required_tools"]),
            validation=ValidationRecord(**meta["validation"]),
            content_hash=meta["content_hash"],
            created_at=meta["created_at"],
            deprecated=bool(meta.get("deprecated", False)),
        )

    def get_skill(self, name: str, version: int | None = None) -> Skill:
        versions = self._versions(name)
        if not versions:
            raise UnknownSkill(f"no such skill: {name}")
        if version is None:
            version = versions[-1]
        elif version not in versions:
            raise UnknownVersion(f"{name} has no version {version}")
        return self._read(name, version)

    def names(self) -> list[str]:
        return sorted(p.name for p in self._root.iterdir() if p.is_dir())

    def list_skills(self) -> list[Skill]:
        """Latest version of every skill, deprecated included."""
        return [self.get_skill(name) for name in self.names()]

    def search_skills(self, query: str, k: int = 5) -> list[tuple[str, int, str]]:
        """Rank latest versions by token overlap: 3x name, 1x description."""
        if k < 1:
            raise ValueError("k must be >= 1")
        qtokens = tokenize(query)
        scored = []
        for skill in self.list_skills():
            if skill.deprecated:
                continue
            score = 3 * len(qtokens & tokenize(skill.name)) + 1 * len(
                qtokens & tokenize(skill.description)
            )
            if score > 0:
                scored.append((score, skill.name, skill.version, skill.description))
        scored.sort(key=lambda item: (-item[0], item[1]))
        return [(name, version, desc) for _, name, version, desc in scored[:k]]

    def deprecate(self, name: str) -> None:
        """Hide a skill from search; every version stays retrievable."""
        versions = self._versions(name)
        if not versions:
            raise UnknownSkill(f"no such skill: {name}")
        for version in versions:
            meta_path = self._skill_dir(name) / f"v{version}.meta.json"
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            meta["deprecated"] = True
            meta_path.write_text(json.dumps(meta, indent=2), encoding="utf-8")
