"""JSON-over-HTTP decision service.

``agent_context`` on authorize requests is experimental: the shape may change
once agent request annotations settle.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
import threading
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request as HTTPRequest
from fastapi.responses import JSONResponse, Response

from .clock import SimClock, make_clock
from .config import EngineConfig
from .errors import BZError, CompileRejected, MalformedLine
from .intake import Event, EventLog
from .reasoning.context import Request
from .reasoning.engine import Engine
from .world import WorldStore

log = logging.getLogger("bzpdp.service")

_STATUS = {
    "unknown-accessor": 404, "unknown-entity": 404, "unknown-challenge": 404,
    "expired": 409, "already-terminal": 409, "wrong-authority": 409, "not-active": 409,
    "compile-rejected": 409, "empty-policy": 409,
}


def _error(exc: BZError) -> JSONResponse:
    return JSONResponse(exc.to_dict(), status_code=_STATUS.get(exc.code, 400))


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse({"error": "bad-request", "message": message}, status_code=400)


class _BadBody(ValueError):
    pass


async def _json_body(req: HTTPRequest) -> Any:
    raw = await req.body()
    return json.loads(raw or b"{}")


async def _object_body(req: HTTPRequest) -> dict[str, Any]:
    try:
        body = await _json_body(req)
    except ValueError as exc:
        raise _BadBody(f"body is not JSON: {exc}") from None
    if not isinstance(body, dict):
        raise _BadBody("body must be a JSON object")
    return body


def create_app(engine: Engine, drain_inline: bool | None = None) -> FastAPI:
    """``drain_inline`` runs the slow path inside each mutating request; it
    defaults to on for the simulated clock, which has no background worker."""
    app = FastAPI(title="bz decision service", version="1")
    admin_lock = threading.Lock()
    synchronous = isinstance(engine.clock, SimClock) if drain_inline is None else drain_inline

    @app.exception_handler(_BadBody)
    async def bad_body(_req: HTTPRequest, exc: _BadBody) -> JSONResponse:
        return _bad_request(str(exc))

    def settle() -> None:
        if synchronous:
            engine.run_slow_path()

    @app.get("/healthz")
    def healthz() -> dict[str, Any]:
        return {"status": "ok", "policy_version": engine.policy_version,
                "snapshot_version": engine.world.snapshot().version}

    @app.post("/v1/authorize")
    async def authorize(req: HTTPRequest) -> Response:
        try:
            request = Request.from_dict(await _object_body(req))
        except (ValueError, KeyError, TypeError) as exc:
            return _bad_request(f"malformed authorize request: {exc}")
        try:
            record = engine.authorize(request)
        except BZError as exc:
            return _error(exc)
        settle()
        return Response(record.to_json(), media_type="application/json")

    @app.post("/v1/events", status_code=202)
    async def events(req: HTTPRequest) -> JSONResponse:
        text = (await req.body()).decode("utf-8", errors="replace")
        accepted, rejected = 0, []
        for no, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                e = Event.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                err = MalformedLine(no, str(exc))
                rejected.append({"line": no, "error": err.code, "message": str(err)})
                continue
            try:
                engine.ingest(e)
                accepted += 1
            except BZError as exc:
                rejected.append({"line": no, "error": exc.code, "message": str(exc)})
        settle()
        return JSONResponse({"accepted": accepted, "rejected": rejected}, status_code=202)

    @app.post("/v1/challenges/{challenge_id}/response")
    async def respond(challenge_id: str, req: HTTPRequest) -> JSONResponse:
        payload = (await _object_body(req)).get("payload", {})
        if not isinstance(payload, dict):
            return _bad_request("payload must be an object")
        try:
            state = engine.challenges.respond(challenge_id, payload)
        except BZError as exc:
            settle()
            return _error(exc)
        settle()
        return JSONResponse({"state": state})

    @app.get("/v1/containments")
    def containments(accessor: str | None = None) -> list[dict[str, Any]]:
        return [c.to_dict() for c in engine.challenges.containments(accessor)]

    @app.post("/v1/containments/{containment_id}/lift")
    async def lift(containment_id: str, req: HTTPRequest) -> JSONResponse:
        body = await _object_body(req)
        if engine.challenges.containment(containment_id) is None:
            return JSONResponse({"error": "unknown-containment",
                                 "message": f"no containment {containment_id!r}"}, status_code=404)
        try:
            with admin_lock:
                c = engine.challenges.lift_containment(
                    containment_id, body.get("authority", "manual"), body.get("reason", ""))
        except BZError as exc:
            return _error(exc)
        except ValueError as exc:
            return _bad_request(str(exc))
        return JSONResponse(c.to_dict())

    @app.post("/v1/admin/reload")
    async def reload(req: HTTPRequest) -> JSONResponse:
        body = await _object_body(req)
        path = body.get("policy_path")
        if not path:
            return _bad_request("policy_path is required")
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            return _bad_request(str(exc))
        try:
            with admin_lock:
                version = engine.install_policy(text)
        except BZError as exc:
            return _error(exc)
        return JSONResponse({"policy_version": version})

    @app.post("/v1/admin/world")
    async def world(req: HTTPRequest) -> JSONResponse:
        body = await _object_body(req)
        try:
            doc = body["document"] if "document" in body else json.loads(
                Path(body["world_path"]).read_text(encoding="utf-8"))
        except (KeyError, OSError, ValueError) as exc:
            return _bad_request(f"need 'document' or a readable 'world_path': {exc}")
        try:
            with admin_lock:
                version = engine.world.load_document(doc)
        except BZError as exc:
            return _error(exc)
        return JSONResponse({"snapshot_version": version})

    return app


@dataclasses.dataclass(frozen=True)
class ServiceConfig:
    listen_addr: str
    world_path: str
    policy_path: str
    config_path: str | None = None
    clock: str = "real"
    seed: int = 0
    log_path: str | None = None

    @classmethod
    def from_env(cls, env: dict[str, str] | None = None) -> "ServiceConfig":
        env = dict(os.environ if env is None else env)
        missing = [k for k in ("BZ_WORLD_PATH", "BZ_POLICY_PATH") if not env.get(k)]
        if missing:
            raise ValueError(f"missing required environment: {', '.join(missing)}")
        return cls(listen_addr=env.get("BZ_LISTEN_ADDR", "127.0.0.1:8181"),
                   world_path=env["BZ_WORLD_PATH"], policy_path=env["BZ_POLICY_PATH"],
                   config_path=env.get("BZ_CONFIG") or None, clock=env.get("BZ_CLOCK", "real"),
                   seed=int(env.get("BZ_SEED", "0")), log_path=env.get("BZ_LOG_PATH") or None)

    def check_paths(self) -> None:
        for p in (self.world_path, self.policy_path, self.config_path):
            if p is not None and not os.access(p, os.R_OK):
                raise ValueError(f"path not readable: {p}")

    @property
    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen_addr.rpartition(":")
        return host or "127.0.0.1", int(port)


def build_engine(cfg: ServiceConfig) -> Engine:
    """Engine for ``cfg``; raises ``CompileRejected`` rather than start without a policy."""
    cfg.check_paths()
    ecfg = dataclasses.replace(EngineConfig.load(cfg.config_path), clock=cfg.clock, seed=cfg.seed)
    world = WorldStore.from_document(json.loads(Path(cfg.world_path).read_text(encoding="utf-8")))
    text = Path(cfg.policy_path).read_text(encoding="utf-8")
    ev_log = EventLog(cfg.log_path) if cfg.log_path else None
    return Engine(world, text, ecfg, clock=make_clock(ecfg.clock, ecfg.clock_start_ms), log=ev_log)


def serve(cfg: ServiceConfig) -> None:
    import uvicorn

    try:
        engine = build_engine(cfg)
    except CompileRejected as exc:
        for d in exc.to_dict().get("diagnostics", []):
            log.error("policy rejected: %s", d)
        raise
    stop = None if isinstance(engine.clock, SimClock) else engine.start_worker()
    host, port = cfg.host_port
    try:
        uvicorn.run(create_app(engine), host=host, port=port, log_level="info")
    finally:
        if stop is not None:
            stop.set()
        engine.run_slow_path()
        engine.intake.log.flush()
        engine.intake.log.close()
