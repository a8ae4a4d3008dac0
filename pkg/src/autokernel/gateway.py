"""HTTP/event-stream front door: sessions, streamed message turns, file
upload, and durable feedback (event schema events/v1).

Streaming is one-directional server-sent events; the UI posts on separate
requests. Authentication is opaque bearer tokens against a local user table.
"""

from __future__ import annotations

import json
import queue
import threading
from dataclasses import dataclass, field

from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .decisions import ObservedState, StateFragment
from .files import FileManager
from .kernel import Kernel, Limits, TaskContext
from .memory import MemoryStore, RuleBasedExtractor, embed_reference
from .planlang import PlanRuntime
from .storage import Storage

EVENT_SCHEMA = "events/v1"

EVENT_TYPES = (
    "plan_generated", "action_executed", "observation",
    "perception_started", "final_answer", "error",
)

DEFAULT_FILE_CAP = 50 * 1024 * 1024


@dataclass
class GatewayConfig:
    storage_path: str = ":memory:"
    memory_path: str | None = None
    users: dict = field(default_factory=dict)  # token -> user_id
    policy_factory: object = None  # callable () -> PolicyHandle
    web: object = None  # WebPerception, optional
    file_cap_bytes: int = DEFAULT_FILE_CAP
    limits: Limits = field(default_factory=Limits)


def create_app(config: GatewayConfig) -> FastAPI:
    app = FastAPI(title="autokernel gateway")
    storage = Storage(config.storage_path)
    for token, user_id in config.users.items():
        storage.put_user(token, user_id)

    memory_store = MemoryStore(config.memory_path)
    plan_runtime = PlanRuntime()
    file_manager = FileManager(memory_store)
    extractor = RuleBasedExtractor()

    in_flight: set[str] = set()
    flight_lock = threading.Lock()

    app.state.storage = storage
    app.state.memory_store = memory_store
    app.state.plan_runtime = plan_runtime
    app.state.file_manager = file_manager

    def authenticate(authorization: str = Header(default="")) -> str:
        if not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        user_id = storage.user_for_token(authorization[len("Bearer "):])
        if user_id is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return user_id

    def owned_session(session_id: str, user_id: str) -> dict:
        session = storage.session(session_id)
        if session is None or session["user_id"] != user_id:
            # 404 for both missing and foreign sessions: no existence oracle
            raise HTTPException(status_code=404, detail="no such session")
        return session

    # -- sessions

    @app.post("/sessions")
    def create_session(user_id: str = Depends(authenticate)):
        namespace_ref = plan_runtime.create_session()
        session_id = storage.create_session(user_id, namespace_ref)
        return {"session_id": session_id}

    @app.get("/sessions")
    def list_sessions(user_id: str = Depends(authenticate)):
        return {"sessions": storage.sessions_for_user(user_id)}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str, user_id: str = Depends(authenticate)):
        session = owned_session(session_id, user_id)
        return {"session_id": session_id, "turns": storage.turns(session_id),
                "created_at": session["created_at"]}

    # -- message turns (SSE)

    @app.post("/sessions/{session_id}/messages")
    async def post_message(session_id: str, request: Request,
                           user_id: str = Depends(authenticate)):
        session = owned_session(session_id, user_id)
        try:
            body = json.loads(await request.body())
            content = body["content"]
        except (ValueError, KeyError):
            raise HTTPException(status_code=422, detail="body must be {content}")

        with flight_lock:
            if session_id in in_flight:
                raise HTTPException(status_code=409, detail="task already in flight")
            in_flight.add(session_id)

        events: queue.Queue = queue.Queue()
        emitted: list[dict] = []
        emit_lock = threading.Lock()

        def emit(kind: str, data: dict):
            event = {"type": kind, "data": data}
            with emit_lock:
                emitted.append(event)
            events.put(event)

        policy = config.policy_factory() if config.policy_factory else None
        kernel = Kernel(
            plan_runtime=plan_runtime, memory_store=memory_store,
            extractor=extractor, embedder=embed_reference,
            web=config.web, files=file_manager, emit=emit,
        )
        ctx = TaskContext(instruction=content, user_id=user_id, limits=config.limits)
        state = ObservedState(components=[
            StateFragment(source="user_input", content=content, step_of_origin=0)
        ])

        def run():
            try:
                if policy is None:
                    emit("error", {"message": "no policy configured"})
                    return
                result = kernel.run_task(
                    ctx, state, policy, plan_session=session["namespace_ref"]
                )
                if result.status != "completed":
                    emit("final_answer", {"answer": result.answer,
                                          "status": result.status})
                storage.append_turn(session_id, "user", content, ctx.task_id)
                storage.append_turn(session_id, "assistant", result.answer, ctx.task_id)
                storage.put_trajectory(ctx.task_id, session_id, result.trajectory.export())
            except Exception as exc:  # pragma: no cover - defensive
                emit("error", {"message": f"internal error: {exc}"})
            finally:
                with emit_lock:
                    storage.put_events(ctx.task_id, list(emitted))
                with flight_lock:
                    in_flight.discard(session_id)
                events.put(None)

        threading.Thread(target=run, daemon=True).start()

        def stream():
            event_id = 0
            while True:
                event = events.get()
                if event is None:
                    break
                payload = json.dumps({"schema": EVENT_SCHEMA, **event["data"]})
                yield f"id: {event_id}\nevent: {event['type']}\ndata: {payload}\n\n"
                event_id += 1

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"X-Task-Id": ctx.task_id},
        )

    @app.get("/tasks/{task_id}/trajectory")
    def get_trajectory(task_id: str, user_id: str = Depends(authenticate)):
        stored = storage.trajectory(task_id)
        if stored is None:
            raise HTTPException(status_code=404, detail="no such task")
        owned_session(stored["session_id"], user_id)
        return stored["body"]

    @app.get("/tasks/{task_id}/events")
    def get_events(task_id: str, user_id: str = Depends(authenticate)):
        stored = storage.trajectory(task_id)
        if stored is None:
            raise HTTPException(status_code=404, detail="no such task")
        owned_session(stored["session_id"], user_id)
        return {"events": storage.events(task_id)}

    # -- files

    @app.post("/sessions/{session_id}/files")
    async def upload_file(session_id: str, request: Request, filename: str,
                          user_id: str = Depends(authenticate)):
        owned_session(session_id, user_id)
        data = await request.body()
        if len(data) > config.file_cap_bytes:
            raise HTTPException(status_code=413, detail="file too large")
        if not data:
            raise HTTPException(status_code=422, detail="empty upload")
        try:
            handle = file_manager.load(
                data, filename,
                media_type=request.headers.get("content-type"),
                user_id=user_id,
            )
        except Exception as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"file_id": handle.file_id, "page_count": handle.meta["page_count"]}

    # -- feedback

    @app.post("/feedback")
    async def post_feedback(request: Request, user_id: str = Depends(authenticate)):
        try:
            body = json.loads(await request.body())
            session_id = body["session_id"]
            turn_index = int(body["turn_index"])
            original_messages = body["original_messages"]
        except (ValueError, KeyError, TypeError):
            raise HTTPException(status_code=422, detail="malformed feedback body")
        edited = body.get("edited_response")
        suggestion = body.get("suggestion")
        if edited is None and suggestion is None:
            raise HTTPException(
                status_code=422,
                detail="at least one of edited_response/suggestion is required",
            )
        owned_session(session_id, user_id)
        feedback_id = storage.put_feedback(
            user_id, session_id, turn_index, original_messages, edited, suggestion
        )
        return JSONResponse(status_code=201, content={"feedback_id": feedback_id})

    @app.get("/feedback/export")
    def export_feedback(user_id: str = Depends(authenticate)):
        lines = [json.dumps(r) for r in storage.feedback_for_user(user_id)]
        return StreamingResponse(
            iter(["\n".join(lines) + ("\n" if lines else "")]),
            media_type="application/x-ndjson",
        )

    @app.get("/feedback/{feedback_id}")
    def get_feedback(feedback_id: str, user_id: str = Depends(authenticate)):
        record = storage.feedback(feedback_id)
        if record is None or record["user_id"] != user_id:
            raise HTTPException(status_code=404, detail="no such feedback")
        return record

    return app
