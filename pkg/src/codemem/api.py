"""HTTP service facade: the contract the web console consumes.

Plain POSTs drive sessions; a server-sent event stream delivers trajectory
events in sequence order with the event seq as the SSE id, so a client can
reconnect with Last-Event-ID and resume without gaps or duplicates. Auth is
a single static bearer token; only /healthz is open.
"""

from __future__ import annotations

import asyncio
import json
import socket
import threading
from typing import Any

from fastapi import APIRouter, Depends, FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse

from . import __version__, assets
from .config import Config
from .drivers import DriverError, HttpDriver, driver_from_spec
from .errors import CodeMemError
from .metrics import context_cost, phase_timings
from .orchestrator import Runtime, UnknownSessionError
from .skillbank import UnknownSkill, UnknownVersion, ValidationRecord
from .todos import UnknownSession
from .trajectory import UnknownTrajectory

_NOT_FOUND = (
    UnknownSessionError,
    UnknownSession,
    UnknownSkill,
    UnknownTrajectory,
    UnknownVersion,
)


class PortInUse(CodeMemError):
    pass


def _http_error(exc: CodeMemError) -> HTTPException:
    status = 404 if isinstance(exc, _NOT_FOUND) else 400
    return HTTPException(status, f"{type(exc).__name__}: {exc}")


def _make_driver(spec: str):
    try:
        return driver_from_spec(spec)
    except DriverError as exc:
        raise HTTPException(400, str(exc)) from exc


def create_app(runtime: Runtime, config: Config | None = None) -> FastAPI:
    config = config or Config()
    app = FastAPI(title="codemem", version=__version__)
    app.state.runtime = runtime
    app.state.config = config
    app.state.drivers = {}
    app.state.driver_lock = threading.Lock()

    def require_auth(request: Request) -> None:
        token = config.api_token
        if token is None:
            return
        if request.headers.get("authorization") != f"Bearer {token}":
            raise HTTPException(401, "invalid or missing bearer token")

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok", "version": __version__}

    api = APIRouter(dependencies=[Depends(require_auth)])

    # -- registry ---------------------------------------------------------

    @api.post("/registry/manifests")
    def import_manifest(body: dict[str, Any]) -> dict[str, int]:
        try:
            return {"imported": runtime.import_manifest(body)}
        except CodeMemError as exc:
            raise _http_error(exc) from exc

    @api.get("/registry/search")
    def registry_search(q: str, k: int = 5) -> dict[str, Any]:
        try:
            results = runtime.registry.search_functions(q, k)
        except CodeMemError as exc:
            raise _http_error(exc) from exc
        return {
            "results": [
                {"name": d.name, "summary": d.summary, "tags": sorted(d.tags)}
                for d in results
            ]
        }

    # -- skills ---------------------------------------------------------

    def _skill_meta(skill) -> dict[str, Any]:
        return {
            "name": skill.name,
            "version": skill.version,
            "description": skill.description,
            "signature": skill.signature,
            "entrypoint": skill.entrypoint,
            "required_tools": list(skill.required_tools),
            "content_hash": skill.content_hash,
            "created_at": skill.created_at,
            "deprecated": skill.deprecated,
        }

    @api.get("/skills")
    def list_skills() -> dict[str, Any]:
        return {"skills": [_skill_meta(s) for s in runtime.skills.list_skills()]}

    @api.get("/skills/{name}")
    def get_skill(name: str, version: int | None = None) -> dict[str, Any]:
        try:
            skill = runtime.skills.get_skill(name, version)
        except CodeMemError as exc:
            raise _http_error(exc) from exc
        doc = _skill_meta(skill)
        doc["source"] = skill.source
        doc["versions"] = [v for v in range(1, runtime.skills.get_skill(name).version + 1)]
        return doc

    @api.post("/skills")
    def register_skill(body: dict[str, Any]) -> dict[str, Any]:
        try:
            skill = runtime.skills.register_skill(
                name=str(body.get("name", "")),
                description=str(body.get("description", "")),
                source=str(body.get("source", "")),
                entrypoint=str(body.get("entrypoint", "agent_main")),
                signature=str(body.get("signature", "")),
                required_tools=list(body.get("required_tools", [])),
                validation=ValidationRecord(
                    session_id=str(body.get("session_id", "")),
                    execution_id=str(body.get("execution_id", "")),
                    user_confirmed=bool(body.get("user_confirmed", False)),
                ),
            )
        except CodeMemError as exc:
            raise _http_error(exc) from exc
        return _skill_meta(skill)

    @api.post("/skills/{name}/run")
    def run_skill(name: str, body: dict[str, Any]) -> dict[str, Any]:
        session_id = body.get("session_id")
        try:
            if session_id is None:
                runtime.bootstrap_builtin()
                session = runtime.create_session(scenario=assets.builtin_scenario_doc())
                session_id = session.session_id
            result = runtime.run_skill(
                session_id,
                name,
                body.get("version"),
                body.get("arguments") or {},
            )
        except CodeMemError as exc:
            raise _http_error(exc) from exc
        state = runtime.fixtures.state(session_id)
        return {
            "session_id": session_id,
            "execution_id": result.execution_id,
            "exit_status": result.exit_status,
            "stdout_tail": result.stdout_tail,
            "bridge_call_count": result.bridge_call_count,
            "wall_time": result.wall_time,
            "drive": state.drive_listing() if state else {},
        }

    # -- sessions ---------------------------------------------------------

    @api.post("/sessions")
    def create_session(body: dict[str, Any] | None = None) -> dict[str, Any]:
        body = body or {}
        scenario = body.get("scenario")
        if scenario == "builtin":
            runtime.bootstrap_builtin()
            scenario = assets.builtin_scenario_doc()
        try:
            session = runtime.create_session(body.get("session_id"), scenario)
        except CodeMemError as exc:
            raise _http_error(exc) from exc
        driver_spec = body.get("driver")
        if driver_spec:
            with app.state.driver_lock:
                app.state.drivers[session.session_id] = _make_driver(driver_spec)
        return session.to_dict()

    @api.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: dict[str, Any]) -> dict[str, Any]:
        text = str(body.get("text", ""))
        with app.state.driver_lock:
            driver = app.state.drivers.get(session_id)
            if body.get("driver"):
                driver = _make_driver(body["driver"])
                app.state.drivers[session_id] = driver
        if driver is None and config.driver_endpoint:
            driver = HttpDriver(config.driver_endpoint)
            with app.state.driver_lock:
                app.state.drivers[session_id] = driver
        if driver is None:
            raise HTTPException(400, "no driver bound to this session")
        try:
            events = runtime.run_session(session_id, text, driver)
        except CodeMemError as exc:
            raise _http_error(exc) from exc
        session = runtime.get_session(session_id)
        return {"status": session.status, "events_appended": len(events)}

    @api.get("/sessions/{session_id}/events")
    async def event_stream(
        request: Request, session_id: str, follow: bool = True
    ) -> StreamingResponse:
        try:
            trajectory = runtime.trajectories.get(session_id)
        except CodeMemError as exc:
            raise _http_error(exc) from exc
        last_id = request.headers.get("last-event-id") or request.query_params.get(
            "after", ""
        )
        cursor = int(last_id) if str(last_id).lstrip("-").isdigit() else -1

        async def stream():
            position = cursor
            while True:
                for event in trajectory.events_after(position):
                    position = event.seq
                    data = json.dumps(event.to_dict(), sort_keys=True)
                    yield f"id: {event.seq}\nevent: {event.kind}\ndata: {data}\n\n"
                if not follow:
                    return
                if await request.is_disconnected():
                    return
                await asyncio.sleep(0.05)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @api.get("/sessions/{session_id}/todos")
    def get_todos(session_id: str) -> dict[str, Any]:
        try:
            todo_list = runtime.todos.get_todos(session_id)
        except CodeMemError as exc:
            raise _http_error(exc) from exc
        return {
            "session_id": session_id,
            "revision": todo_list.revision,
            "items": [{"status": i.status, "content": i.content} for i in todo_list.items],
        }

    @api.put("/sessions/{session_id}/todos")
    def put_todos(session_id: str, body: dict[str, Any]) -> dict[str, Any]:
        try:
            session = runtime.get_session(session_id)
            todo_list = runtime.todos.write_todos(session_id, body.get("items", []))
        except CodeMemError as exc:
            raise _http_error(exc) from exc
        rendered = "\n".join(f"- [{i.status}] {i.content}" for i in todo_list.items)
        session.trajectory.append(
            "todo_write",
            {
                "revision": todo_list.revision,
                "items": [{"content": i.content, "status": i.status} for i in todo_list.items],
                "visible_text": f"todos (revision {todo_list.revision}):\n{rendered}",
            },
        )
        return {
            "session_id": session_id,
            "revision": todo_list.revision,
            "items": [{"status": i.status, "content": i.content} for i in todo_list.items],
        }

    @api.get("/sessions/{session_id}/metrics")
    def session_metrics(session_id: str, mode: str = "codemem") -> dict[str, Any]:
        try:
            trajectory = runtime.trajectories.get(session_id)
            cost = context_cost(trajectory, mode)
            timings = phase_timings(trajectory)
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from exc
        except CodeMemError as exc:
            raise _http_error(exc) from exc
        return {
            "session_id": session_id,
            "context_cost": cost.to_dict(),
            "phase_timings": timings.to_dict(),
        }

    @api.get("/sessions/{session_id}/fixture/drive")
    def fixture_drive(session_id: str) -> dict[str, Any]:
        state = runtime.fixtures.state(session_id)
        if state is None:
            try:
                runtime.get_session(session_id)
            except CodeMemError as exc:
                raise _http_error(exc) from exc
            state = runtime.fixtures.state(session_id)
        return {"files": state.drive_listing() if state else {}}

    app.include_router(api)
    return app


def serve(config: Config) -> None:
    """Run the service; raises PortInUse before handing over to uvicorn."""
    import uvicorn

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((config.host, config.port))
    except OSError as exc:
        raise PortInUse(f"{config.host}:{config.port} is already bound: {exc}") from exc
    finally:
        probe.close()

    runtime = Runtime(
        config.data_dir,
        interpreter=config.interpreter,
        default_limits=config.limits,
    )
    runtime.bootstrap_builtin()
    app = create_app(runtime, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
