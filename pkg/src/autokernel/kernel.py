"""The autopilot loop: present observed state to the policy, then answer,
execute a plan step, or spawn a deeper perception task.

The kernel never second-guesses the policy's sufficiency judgment; it only
enforces limits (steps, depth, wall clock, cancellation) and records the
trajectory. Perception tasks are child tasks one recursion level deeper.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass, field

from . import memory as memkernel
from .decisions import ObservedState, StateFragment, StepDecision
from .errors import Cancelled, DepthExceeded, MalformedDecision, PolicyUnavailable
from .policy import build_prompt, parse_decision

DEFAULT_MAX_DEPTH = 3
DEFAULT_MAX_STEPS = 20
DEFAULT_WALL_CLOCK = 300.0
RETRY_BUDGET = 2  # extra attempts after a malformed policy output


@dataclass
class Limits:
    max_depth: int = DEFAULT_MAX_DEPTH
    max_steps: int = DEFAULT_MAX_STEPS
    wall_clock_budget: float = DEFAULT_WALL_CLOCK


@dataclass
class TaskContext:
    instruction: str
    task_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    depth: int = 0
    step_index: int = 0
    limits: Limits = field(default_factory=Limits)
    parent_task: str | None = None
    user_id: str = ""
    cancel_event: threading.Event | None = None

    def child(self, instruction: str) -> "TaskContext":
        return TaskContext(
            instruction=instruction,
            depth=self.depth + 1,
            limits=self.limits,
            parent_task=self.task_id,
            user_id=self.user_id,
            cancel_event=self.cancel_event,
        )


@dataclass
class TrajectoryRecord:
    step: int
    decision_kind: str
    payload_digest: str
    fragments_added: list[str] = field(default_factory=list)
    child: "TaskTrajectory | None" = None


@dataclass
class TaskTrajectory:
    task_id: str
    depth: int
    records: list[TrajectoryRecord] = field(default_factory=list)

    def export(self) -> dict:
        """Stable JSON structure for the UI trace view and annotation."""
        return {
            "task_id": self.task_id,
            "depth": self.depth,
            "records": [
                {
                    "step": r.step,
                    "decision_kind": r.decision_kind,
                    "payload_digest": r.payload_digest,
                    "fragments_added": r.fragments_added,
                    "child": r.child.export() if r.child is not None else None,
                }
                for r in self.records
            ],
        }

    def export_json(self) -> str:
        return json.dumps(self.export(), indent=2, sort_keys=True)


@dataclass
class TaskResult:
    answer: str
    trajectory: TaskTrajectory
    status: str  # completed | step_limit | depth_limit | cancelled | error


@dataclass
class PerceptionResult:
    summary: str
    child_trajectory: TaskTrajectory


def _digest(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class Kernel:
    """Wires the policy gateway, plan runtime, memory, web, and files together.

    Constructor arguments beyond the plan runtime are optional: a kernel
    without a web driver simply reports web perception as unavailable to the
    policy instead of crashing.
    """

    def __init__(self, plan_runtime, memory_store=None, extractor=None,
                 embedder=None, web=None, files=None, context_budget: int = 16_000,
                 emit=None):
        self.plan_runtime = plan_runtime
        self.memory_store = memory_store
        self.extractor = extractor or memkernel.RuleBasedExtractor()
        self.embedder = embedder or memkernel.embed_reference
        self.web = web
        self.files = files
        self.context_budget = context_budget
        self.emit = emit or (lambda kind, data: None)

    # -- main loop

    def run_task(self, ctx: TaskContext, initial_state: ObservedState, policy,
                 plan_session: str | None = None) -> TaskResult:
        trajectory = TaskTrajectory(task_id=ctx.task_id, depth=ctx.depth)
        if ctx.depth > ctx.limits.max_depth:
            return TaskResult(answer="", trajectory=trajectory, status="depth_limit")
        state = initial_state
        session = plan_session or self.plan_runtime.create_session()
        started = time.monotonic()

        while ctx.step_index < ctx.limits.max_steps:
            if ctx.cancel_event is not None and ctx.cancel_event.is_set():
                return TaskResult(answer="", trajectory=trajectory, status="cancelled")
            if time.monotonic() - started > ctx.limits.wall_clock_budget:
                return TaskResult(
                    answer="(wall clock budget exhausted)",
                    trajectory=trajectory, status="error",
                )
            try:
                decision, raw, retry_fragments = self.step(
                    ctx, state, policy, session, trajectory
                )
            except (PolicyUnavailable, MalformedDecision) as exc:
                self.emit("error", {"message": str(exc)})
                return TaskResult(answer=str(exc), trajectory=trajectory, status="error")

            record = TrajectoryRecord(
                step=ctx.step_index,
                decision_kind=decision.kind,
                payload_digest=_digest(raw),
                fragments_added=list(retry_fragments),
            )
            trajectory.records.append(record)
            ctx.step_index += 1

            if decision.kind == "final_answer":
                self.emit("final_answer", {"answer": decision.answer})
                return TaskResult(
                    answer=decision.answer, trajectory=trajectory, status="completed"
                )
            self._apply_decision(ctx, state, decision, policy, session, record)

        answer = self._summarize_on_limit(ctx, state, policy, session)
        return TaskResult(answer=answer, trajectory=trajectory, status="step_limit")

    def step(self, ctx: TaskContext, state: ObservedState, policy,
             session: str, trajectory: TaskTrajectory):
        """One policy call, with bounded retry on unparseable output."""
        last_error = None
        retry_fragments: list[str] = []
        for attempt in range(RETRY_BUDGET + 1):
            digest = self.plan_runtime.namespace_digest(session)
            prompt = build_prompt(ctx.instruction, state, digest, self.context_budget)
            raw = policy.complete(prompt)
            try:
                decision = parse_decision(raw)
            except MalformedDecision as exc:
                last_error = exc
                state.append(StateFragment(
                    source="error_report",
                    content=f"your previous output could not be parsed: {exc}",
                    step_of_origin=ctx.step_index,
                ))
                retry_fragments.append("error_report")
                continue
            if not isinstance(decision, StepDecision):
                last_error = MalformedDecision(
                    f"web action {decision.kind} outside a web perception task"
                )
                state.append(StateFragment(
                    source="error_report",
                    content=str(last_error),
                    step_of_origin=ctx.step_index,
                ))
                retry_fragments.append("error_report")
                continue
            return decision, raw, retry_fragments
        raise MalformedDecision(
            f"policy output unparseable after {RETRY_BUDGET + 1} attempts: {last_error}"
        )

    # -- decision handlers

    def _apply_decision(self, ctx, state, decision: StepDecision, policy,
                        session, record: TrajectoryRecord):
        if decision.kind == "execute_plan":
            self.emit("plan_generated", {"plan": decision.plan_source})
            result = self.plan_runtime.execute(session, decision.plan_source)
            if result.status == "ok":
                output = "\n".join(result.outputs) if result.outputs else "(ok)"
                content = (f"plan executed: {result.statements_executed} statements, "
                           f"new bindings {result.new_bindings}\n{output}")
                self._add_fragment(ctx, state, record, "execution_result", content)
            else:
                self._add_fragment(
                    ctx, state, record, "error_report",
                    f"plan failed at statement "
                    f"{result.error['failing_statement_index']}: "
                    f"{result.error['message']}",
                )
            self.emit("action_executed", {
                "kind": "execute_plan", "status": result.status,
                "statements_executed": result.statements_executed,
            })
        elif decision.kind in ("perceive_web", "perceive_file"):
            kind = "web" if decision.kind == "perceive_web" else "file"
            try:
                perception = self.spawn_perception(ctx, kind, decision, policy)
            except DepthExceeded as exc:
                self._add_fragment(ctx, state, record, "error_report", str(exc))
                return
            record.child = perception.child_trajectory
            source = "web_observation" if kind == "web" else "file_observation"
            self._add_fragment(ctx, state, record, source, perception.summary)
        elif decision.kind == "memory_read":
            summary = self.memory_recall(decision.query, decision.k or 5, ctx.user_id)
            self._add_fragment(ctx, state, record, "memory_recall", summary)
        elif decision.kind == "memory_write":
            doc_id = self.memory_write(decision.content, ctx.user_id)
            self._add_fragment(
                ctx, state, record, "execution_result", f"stored memory {doc_id}"
            )

    def _add_fragment(self, ctx, state: ObservedState, record: TrajectoryRecord,
                      source: str, content: str):
        state.append(StateFragment(
            source=source, content=content, step_of_origin=ctx.step_index
        ))
        record.fragments_added.append(source)
        self.emit("observation", {"source": source, "content": content})

    # -- perception

    def spawn_perception(self, parent: TaskContext, kind: str,
                         decision: StepDecision, policy) -> PerceptionResult:
        if parent.depth + 1 > parent.limits.max_depth:
            raise DepthExceeded(
                f"perception at depth {parent.depth + 1} exceeds "
                f"max_depth {parent.limits.max_depth}"
            )
        child_ctx = parent.child(decision.instruction or decision.request or "")
        self.emit("perception_started", {"kind": kind, "depth": child_ctx.depth})
        if kind == "web":
            if self.web is None:
                raise DepthExceeded("no web driver configured")
            browse = self.web.browse(
                instruction=decision.instruction,
                start_url=decision.start_url,
                policy=policy,
                ctx=child_ctx,
                kernel=self,
            )
            return PerceptionResult(
                summary=browse.summary, child_trajectory=browse.trajectory
            )
        # file perception: package evidence for the parent's state
        if self.files is None:
            raise DepthExceeded("no file manager configured")
        child_traj = TaskTrajectory(task_id=child_ctx.task_id, depth=child_ctx.depth)
        handle = self.files.get(decision.file_id)
        fragments = self.files.read(handle, decision.request)
        child_traj.records.append(TrajectoryRecord(
            step=0, decision_kind="perceive_file",
            payload_digest=_digest(decision.request or ""),
            fragments_added=["file_observation"] * len(fragments),
        ))
        return PerceptionResult(summary="\n\n".join(fragments), child_trajectory=child_traj)

    def run_child_task(self, parent_ctx: TaskContext, instruction: str,
                       policy) -> TaskResult:
        """A deeper self-contained reasoning task (used by the web loop)."""
        if parent_ctx.depth + 1 > parent_ctx.limits.max_depth:
            raise DepthExceeded(
                f"child task at depth {parent_ctx.depth + 1} exceeds "
                f"max_depth {parent_ctx.limits.max_depth}"
            )
        child_ctx = parent_ctx.child(instruction)
        self.emit("perception_started", {"kind": "reasoning", "depth": child_ctx.depth})
        state = ObservedState(components=[
            StateFragment(source="user_input", content=instruction, step_of_origin=0)
        ])
        return self.run_task(child_ctx, state, policy)

    # -- memory plumbing

    def memory_recall(self, query: str, k: int, user_id: str) -> str:
        if self.memory_store is None:
            return "(no memory store configured)"
        drafts = []
        try:
            drafts = self.extractor.extract(query)
        except Exception:
            pass
        concepts = sorted({c for d in drafts for c in d.mentioned_concepts})
        q = memkernel.RetrievalQuery(
            text=query, query_emb=self.embedder(query), concepts=concepts, k=k
        )
        result = memkernel.retrieve(q, self.memory_store, user_id=user_id)
        if not result.entries:
            return "(no matching memories)"
        lines = []
        for entry in result.entries:
            rec = self.memory_store.get(entry.doc_id, user_id)
            lines.append(f"[{entry.score:.3f}] {rec.text if rec else entry.doc_id}")
        return "\n".join(lines)

    def memory_write(self, content: str, user_id: str) -> str:
        if self.memory_store is None:
            return "(no memory store configured)"
        return memkernel.ingest(
            content,
            {"timestamp": "", "source": "note", "user_id": user_id},
            self.extractor, self.embedder, self.memory_store,
        )

    # -- step-limit summarization

    def _summarize_on_limit(self, ctx, state: ObservedState, policy, session) -> str:
        prompt = (
            "You ran out of steps. Summarize what you found so far for the user, "
            "as plain text.\n\n" + state.serialize()
        )
        try:
            return policy.complete(prompt)
        except PolicyUnavailable:
            return "(step limit reached before an answer was found)"
        except Cancelled:  # pragma: no cover
            return "(cancelled)"
