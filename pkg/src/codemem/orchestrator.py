"""The agent loop: drives an LLM through the core tools and records everything.

The Runtime wires every store together around one data directory. A session
holds the per-conversation state the registry deliberately doesn't: which
tools are loaded, which skills are in scope, and the append-only trajectory.
``run_session`` is the exploratory loop; ``run_skill`` is the reuse fast
path that executes frozen logic with zero driver calls.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import assets
from .drivers import AssistantAction, Message
from .errors import CodeMemError
from .fixtures import FixtureScenario, FixtureStore, load_scenario
from .metrics import estimate_tokens
from .registry import ToolRegistry
from .sandbox import (
    ExecutionRequest,
    ExecutionResult,
    Limits,
    SandboxExecutor,
    generate_preamble,
)
from .sandbox.preamble import entrypoint_call_stub
from .skillbank import DEFAULT_ENTRYPOINT, SkillBank, ValidationRecord
from .todos import TodoStore
from .toolhost import ExecutionContext, ToolHost
from .trajectory import Trajectory, TrajectoryStore

DEFAULT_MAX_STEPS = 40
DEFAULT_CONTEXT_BUDGET = 200_000  # estimated tokens
TRUNCATION_MARKER = "[context truncated]"

CORE_TOOLS = frozenset(
    {
        "search_functions",
        "load_functions",
        "write_todos",
        "execute_code",
        "register_skill",
        "search_skills",
        "load_skill",
        "run_skill",
    }
)


class StepLimitExceeded(CodeMemError):
    pass


class UnknownSessionError(CodeMemError):
    pass


@dataclass
class Session:
    session_id: str
    created_at: str
    status: str = "active"  # active | awaiting_user | done | failed
    loaded_tools: set[str] = field(default_factory=set)
    loaded_skills: list[tuple[str, int]] = field(default_factory=list)
    trajectory: Trajectory | None = None
    execution_lock: threading.Lock = field(default_factory=threading.Lock)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "created_at": self.created_at,
            "status": self.status,
            "loaded_tools": sorted(self.loaded_tools),
            "loaded_skills": [list(pair) for pair in self.loaded_skills],
        }


class Runtime:
    """Everything behind the four core tools, rooted at one data directory."""

    def __init__(
        self,
        data_dir: Path | str,
        *,
        interpreter: list[str] | None = None,
        default_limits: Limits | None = None,
        max_steps: int = DEFAULT_MAX_STEPS,
        context_budget: int = DEFAULT_CONTEXT_BUDGET,
        auto_register: bool = False,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.max_steps = max_steps
        self.context_budget = context_budget
        self.auto_register = auto_register
        self.default_limits = default_limits or Limits()

        self.registry = ToolRegistry()
        sessions_dir = self.data_dir / "sessions"
        self.fixtures = FixtureStore(persist_dir=sessions_dir)
        self.toolhost = ToolHost(self.fixtures)
        self.trajectories = TrajectoryStore(sessions_dir)
        self.todos = TodoStore(self.data_dir / "todos")
        self.skills = SkillBank(
            self.data_dir / "skills",
            execution_resolver=self._execution_status,
            registry_names=self.registry.names,
        )
        self.executor = SandboxExecutor(interpreter)
        self.system_prompt = assets.system_prompt()
        self.toolhost.set_observer(self._on_invocation)
        self._sessions: dict[str, Session] = {}
        self._sessions_lock = threading.Lock()
        self._manifest_dir = self.data_dir / "manifests"
        self._reimport_manifests()

    # -- wiring ---------------------------------------------------------------

    def _execution_status(self, session_id: str, execution_id: str) -> str | None:
        if not self.trajectories.exists(session_id):
            return None
        return self.trajectories.get(session_id).execution_status(execution_id)

    def _on_invocation(self, record, session_id: str) -> None:
        if self.trajectories.exists(session_id):
            self.trajectories.get(session_id).append("invocation", record.to_dict())

    def _reimport_manifests(self) -> None:
        if not self._manifest_dir.is_dir():
            return
        for path in sorted(self._manifest_dir.glob("*.json")):
            self._apply_manifest(path.read_text(encoding="utf-8"))

    def _apply_manifest(self, manifest: str | dict[str, Any]) -> int:
        count = self.registry.import_manifest(manifest)
        for name in self.registry.names():
            if not self.toolhost.is_bound(name):
                self.toolhost.bind_from_spec(name, self.registry.binding_spec(name))
        return count

    def import_manifest(self, manifest: str | dict[str, Any]) -> int:
        """Import and persist a manifest; future runtimes re-import it."""
        count = self._apply_manifest(manifest)
        doc = json.loads(manifest) if isinstance(manifest, str) else manifest
        self._manifest_dir.mkdir(parents=True, exist_ok=True)
        existing = len(list(self._manifest_dir.glob("*.json")))
        (self._manifest_dir / f"{existing:04d}.json").write_text(
            json.dumps(doc, indent=2), encoding="utf-8"
        )
        return count

    def bootstrap_builtin(self) -> None:
        """Import the bundled manifest; idempotent across Runtime instances."""
        if not (self.registry.names() >= set(assets.BRIDGE_SKILL_TOOLS)):
            self.import_manifest(assets.builtin_manifest())

    # -- sessions ---------------------------------------------------------------

    def create_session(
        self,
        session_id: str | None = None,
        scenario: FixtureScenario | dict[str, Any] | None = None,
    ) -> Session:
        session_id = session_id or uuid.uuid4().hex[:12]
        with self._sessions_lock:
            if session_id in self._sessions or self.trajectories.exists(session_id):
                raise CodeMemError(f"session {session_id!r} already exists")
            session = Session(
                session_id=session_id,
                created_at=datetime.now(timezone.utc).isoformat(),
            )
            session.trajectory = self.trajectories.create(session_id, self.system_prompt)
            self._sessions[session_id] = session
        self.todos.ensure_session(session_id)
        session.trajectory.append("session_created", {"session_id": session_id})
        self._save_session(session)
        if scenario is not None:
            self.load_fixture(session_id, scenario)
        return session

    def get_session(self, session_id: str) -> Session:
        with self._sessions_lock:
            session = self._sessions.get(session_id)
            if session is not None:
                return session
            meta_path = self.data_dir / "sessions" / session_id / "session.json"
            if not meta_path.exists():
                raise UnknownSessionError(f"no such session: {session_id}")
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            session = Session(
                session_id=session_id,
                created_at=meta["created_at"],
                status=meta["status"],
                loaded_tools=set(meta["loaded_tools"]),
                loaded_skills=[tuple(p) for p in meta["loaded_skills"]],
            )
            session.trajectory = self.trajectories.get(session_id)
            self._sessions[session_id] = session
        scenario_path = self.data_dir / "sessions" / session_id / "scenario.json"
        if scenario_path.exists() and self.fixtures.state(session_id) is None:
            self.fixtures.load(session_id, load_scenario(scenario_path.read_text("utf-8")))
        return session

    def _save_session(self, session: Session) -> None:
        session_dir = self.data_dir / "sessions" / session.session_id
        session_dir.mkdir(parents=True, exist_ok=True)
        (session_dir / "session.json").write_text(
            json.dumps(session.to_dict(), indent=2), encoding="utf-8"
        )

    def load_fixture(
        self, session_id: str, scenario: FixtureScenario | dict[str, Any]
    ) -> None:
        session = self.get_session(session_id)
        if isinstance(scenario, dict):
            doc = scenario
            scenario = load_scenario(scenario)
        else:
            doc = None
        self.fixtures.load(session_id, scenario)
        if doc is not None:
            session_dir = self.data_dir / "sessions" / session.session_id
            (session_dir / "scenario.json").write_text(
                json.dumps(doc, indent=2), encoding="utf-8"
            )

    # -- visible context ----------------------------------------------------------

    def _visible_context(self, session: Session) -> list[Message]:
        messages: list[Message] = []
        for event in session.trajectory.events:
            text = event.visible_text
            if text is None:
                continue
            if event.kind == "user_message":
                role = "user"
            elif event.kind == "assistant_action":
                role = "assistant"
            else:
                role = "tool"
            messages.append((role, text))
        budget = self.context_budget - estimate_tokens(self.system_prompt)
        used = sum(estimate_tokens(t) for _, t in messages)
        truncated = False
        while messages and used > budget:
            _, dropped = messages.pop(0)
            used -= estimate_tokens(dropped)
            truncated = True
        visible: list[Message] = [("system", self.system_prompt)]
        if truncated:
            visible.append(("tool", TRUNCATION_MARKER))
        visible.extend(messages)
        return visible

    # -- the agent loop ---------------------------------------------------------

    def run_session(
        self,
        session_id: str,
        user_message: str,
        driver,
        *,
        max_steps: int | None = None,
    ) -> list:
        """Drive the session until final, ask_user, or the step limit.

        Returns the trajectory delta produced by this call.
        """
        session = self.get_session(session_id)
        if session.status not in ("active", "awaiting_user"):
            raise CodeMemError(f"session {session_id} is {session.status}")
        trajectory = session.trajectory
        first_new = len(trajectory.events)
        session.status = "active"
        trajectory.append(
            "user_message", {"text": user_message, "visible_text": user_message}
        )
        limit = max_steps if max_steps is not None else self.max_steps
        steps = 0
        while True:
            if steps >= limit:
                session.status = "failed"
                self._save_session(session)
                raise StepLimitExceeded(
                    f"session {session_id} exceeded {limit} steps; trajectory intact"
                )
            started = time.monotonic()
            action = driver.next(self._visible_context(session))
            duration = time.monotonic() - started
            steps += 1
            rendered = action.rendered()
            trajectory.append(
                "assistant_action",
                {
                    **action.to_dict(),
                    "raw_text": rendered,
                    "visible_text": rendered,
                    "token_estimate": estimate_tokens(rendered),
                    "duration_s": duration,
                    "step": steps,
                },
            )
            if action.kind == "final":
                session.status = "done"
                break
            if action.kind == "ask_user":
                session.status = "awaiting_user"
                break
            output = self._dispatch_tool(session, action)
            if output is not None:
                trajectory.append(
                    "tool_result", {"tool": action.tool, "visible_text": output}
                )
        self._save_session(session)
        return trajectory.events[first_new:]

    def _dispatch_tool(self, session: Session, action: AssistantAction) -> str | None:
        args = dict(action.args or {})
        tool = action.tool or ""
        try:
            if tool == "search_functions":
                results = self.registry.search_functions(
                    str(args.get("query", "")), int(args.get("k", 5))
                )
                if not results:
                    return "no tools matched"
                lines = [f"- {d.name}: {d.summary}" for d in results]
                return "tool search results:\n" + "\n".join(lines)

            if tool == "load_functions":
                names = list(args.get("names", []))
                schemas = self.registry.get_schemas(names)
                session.loaded_tools.update(names)
                self._save_session(session)
                blocks = [
                    f"{s.descriptor.name}: {s.long_description}\n"
                    f"  parameters: {json.dumps(s.parameters, sort_keys=True)}\n"
                    f"  returns: {s.returns}"
                    for s in schemas
                ]
                return "loaded tool schemas:\n" + "\n".join(blocks)

            if tool == "search_skills":
                hits = self.skills.search_skills(
                    str(args.get("query", "")), int(args.get("k", 5))
                )
                if not hits:
                    return "no skills matched"
                lines = [f"- {name}@v{version}: {desc}" for name, version, desc in hits]
                return "skill search results:\n" + "\n".join(lines)

            if tool == "load_skill":
                skill = self.skills.get_skill(
                    str(args.get("name", "")), args.get("version")
                )
                pair = (skill.name, skill.version)
                if pair not in session.loaded_skills:
                    session.loaded_skills.append(pair)
                self._save_session(session)
                # The LLM sees the signature and description only; the
                # sandbox gets the full source via the preamble.
                return (
                    f"loaded skill {skill.name} v{skill.version}: "
                    f"{skill.signature} — {skill.description}"
                )

            if tool == "write_todos":
                todo_list = self.todos.write_todos(
                    session.session_id, args.get("items", [])
                )
                rendered = "\n".join(
                    f"- [{item.status}] {item.content}" for item in todo_list.items
                )
                session.trajectory.append(
                    "todo_write",
                    {
                        "revision": todo_list.revision,
                        "items": [
                            {"content": i.content, "status": i.status}
                            for i in todo_list.items
                        ],
                        "visible_text": f"todos (revision {todo_list.revision}):\n{rendered}",
                    },
                )
                return None

            if tool == "execute_code":
                self.execute_code(session.session_id, str(args.get("source", "")))
                return None

            if tool == "register_skill":
                return self._register_from_session(session, args)

            if tool == "run_skill":
                self.run_skill(
                    session.session_id,
                    str(args.get("name", "")),
                    args.get("version"),
                    args.get("arguments") or {},
                )
                return None

            return f"error (UnknownAction): {tool!r} is not an available tool"
        except CodeMemError as exc:
            return f"error ({type(exc).__name__}): {exc}"

    def _register_from_session(self, session: Session, args: dict[str, Any]) -> str | None:
        user_confirmed = bool(args.get("user_confirmed", False))
        if not user_confirmed and not self.auto_register:
            return (
                "error (ConfirmationRequired): registration requires "
                "user_confirmed=true (or an auto-register runtime)"
            )
        last_success = None
        for event in reversed(session.trajectory.events):
            if event.kind == "execution_result" and event.payload.get("exit_status") == "success":
                last_success = event.payload["execution_id"]
                break
        validation = ValidationRecord(
            session_id=session.session_id,
            execution_id=last_success or "",
            user_confirmed=user_confirmed,
        )
        skill = self.skills.register_skill(
            name=str(args.get("name", "")),
            description=str(args.get("description", "")),
            source=str(args.get("source", "")),
            entrypoint=str(args.get("entrypoint", DEFAULT_ENTRYPOINT)),
            signature=str(args.get("signature", "")),
            required_tools=list(args.get("required_tools", [])),
            validation=validation,
        )
        session.trajectory.append(
            "skill_registered",
            {
                "name": skill.name,
                "version": skill.version,
                "content_hash": skill.content_hash,
                "visible_text": (
                    f"registered skill {skill.name} v{skill.version} "
                    f"(hash {skill.content_hash[:12]})"
                ),
            },
        )
        return None

    # -- execution glue ------------------------------------------------------------

    def _session_clock(self, session_id: str) -> str | None:
        state = self.fixtures.state(session_id)
        if state is not None and state.scenario.reference_time is not None:
            return state.scenario.reference_time.isoformat()
        return None

    def execute_code(
        self,
        session_id: str,
        source: str,
        *,
        limits: Limits | None = None,
    ) -> ExecutionResult:
        """Run source in the sandbox with the session's loaded tools and skills."""
        session = self.get_session(session_id)
        with session.execution_lock:
            loaded = sorted(session.loaded_tools)
            schemas = self.registry.get_schemas(loaded)
            skills = [self.skills.get_skill(n, v) for n, v in session.loaded_skills]
            preamble = generate_preamble(schemas, skills)
            execution_id = uuid.uuid4().hex
            ctx = ExecutionContext(
                execution_id=execution_id,
                session_id=session_id,
                loaded_tools=frozenset(loaded),
            )
            request = ExecutionRequest(
                session_id=session_id,
                source=source,
                loaded_tools=tuple(loaded),
                loaded_skills=tuple(session.loaded_skills),
                limits=limits or self.default_limits,
                clock=self._session_clock(session_id),
            )
            result = self.executor.execute(
                request,
                preamble,
                lambda tool, args: self.toolhost.invoke(tool, args, ctx),
                execution_id=execution_id,
            )
            records = self.toolhost.records_for(execution_id)
            result = result.with_bridge_calls([r.invocation_id for r in records])
            session.trajectory.append(
                "execution_result",
                {
                    "execution_id": execution_id,
                    "exit_status": result.exit_status,
                    "exit_code": result.exit_code,
                    "stdout_tail": result.stdout_tail,
                    "bridge_calls": list(result.bridge_calls),
                    "bridge_call_count": result.bridge_call_count,
                    "wall_time": result.wall_time,
                    "started_at": result.started_at,
                    "kill_reason": result.kill_reason,
                    "source": source,
                    "visible_text": result.visible_text(),
                },
            )
            if not result.success:
                self._recover_state(session)
            return result

    def _recover_state(self, session: Session) -> None:
        """After a failed execution, re-anchor on the external todo list."""
        todo_list = self.todos.get_todos(session.session_id)
        item = todo_list.first_open_item()
        if item is None:
            return
        session.trajectory.append(
            "state_recovery",
            {
                "selected": item.content,
                "revision": todo_list.revision,
                "visible_text": (
                    f"state recovery: resuming at first non-completed todo: "
                    f"{item.content!r} (todos revision {todo_list.revision})"
                ),
            },
        )

    def run_skill(
        self,
        session_id: str,
        name: str,
        version: int | None = None,
        arguments: dict[str, Any] | None = None,
        *,
        limits: Limits | None = None,
    ) -> ExecutionResult:
        """Reuse fast path: execute a frozen skill with zero driver calls."""
        session = self.get_session(session_id)
        skill = self.skills.get_skill(name, version)
        missing = set(skill.required_tools) - self.registry.names()
        if missing:
            raise CodeMemError(
                f"skill {name} requires unbindable tools: {sorted(missing)}"
            )
        session.loaded_tools.update(skill.required_tools)
        pair = (skill.name, skill.version)
        if pair not in session.loaded_skills:
            session.loaded_skills.append(pair)
        self._save_session(session)
        source = entrypoint_call_stub(skill.entrypoint, arguments or {})
        return self.execute_code(session_id, source, limits=limits)
