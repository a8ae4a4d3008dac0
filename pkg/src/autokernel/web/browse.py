"""Role+name action execution and the inner web browse loop."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..decisions import StepDecision, WebAction
from ..errors import (
    AmbiguousTarget,
    DepthExceeded,
    DriverGone,
    MalformedDecision,
    PolicyUnavailable,
    TargetNotFound,
)
from ..kernel import TaskTrajectory, TrajectoryRecord, _digest
from ..policy import Trajectory, Turn, condense_trajectory, parse_decision
from .ax import DEFAULT_OBSERVATION_BUDGET, Observation, observe_snapshot

WEB_RETRY_BUDGET = 2

WEB_PROMPT_PREAMBLE = """\
You are browsing the web to complete an instruction. Observe the page and
emit exactly one action: Click(role=..., name=...), Type(role=..., name=...,
text=...), Scroll(direction=...), Goback(), Restart(), or Stop("summary").
You may also consult memory with MemoryRead(query=..., k=...).
"""


@dataclass
class ActResult:
    ok: bool
    error: str | None = None
    observation_after: Observation | None = None


@dataclass
class BrowseResult:
    summary: str
    trajectory: TaskTrajectory
    status: str  # completed | step_limit | error
    turns: Trajectory = field(default_factory=Trajectory)


class WebPerception:
    """Owns the browser driver and executes the observe/act contract.

    `targeting` is role_name by default; the coordinates mode exists only as
    a negative control demonstrating why overlapping layouts break
    coordinate-based clicking.
    """

    def __init__(self, driver_factory, observation_budget: int = DEFAULT_OBSERVATION_BUDGET,
                 context_budget: int = 16_000, targeting: str = "role_name"):
        self.driver_factory = driver_factory
        self.observation_budget = observation_budget
        self.context_budget = context_budget
        if targeting not in ("role_name", "coordinates"):
            raise ValueError(f"unknown targeting mode {targeting!r}")
        self.targeting = targeting

    # -- observation

    def observe(self, session) -> Observation:
        return observe_snapshot(session.snapshot(), self.observation_budget)

    # -- action execution

    def act(self, session, action: WebAction) -> ActResult:
        try:
            if action.kind in ("Click", "Type"):
                observation = self.observe(session)
                node_ids = observation.targets.get((action.role, action.name), [])
                if not node_ids:
                    raise TargetNotFound(
                        f"no element with role={action.role!r} name={action.name!r}"
                    )
                if len(node_ids) > 1:
                    raise AmbiguousTarget(action.role, action.name, len(node_ids))
                node_id = node_ids[0]
                if action.kind == "Click":
                    if self.targeting == "coordinates":
                        self._click_by_coordinates(session, node_id)
                    else:
                        session.click(node_id)
                else:
                    session.type(node_id, action.text)
            elif action.kind == "Scroll":
                session.scroll(action.direction)
            elif action.kind == "Goback":
                session.goback()
            elif action.kind == "Restart":
                session.restart()
            else:
                raise ValueError(f"act() cannot execute {action.kind}")
        except (TargetNotFound, AmbiguousTarget) as exc:
            return ActResult(ok=False, error=str(exc),
                             observation_after=self.observe(session))
        return ActResult(ok=True, observation_after=self.observe(session))

    def _click_by_coordinates(self, session, node_id: str):
        # Negative control: dispatch the click at the element's center point
        # and let the page's hit-testing decide what actually receives it.
        snapshot = session.snapshot()
        for node in snapshot.root.walk():
            if node.node_id == node_id:
                cx = node.bbox["x"] + node.bbox["w"] / 2
                cy = node.bbox["y"] + node.bbox["h"] / 2
                session.click_at(cx, cy)
                return
        raise TargetNotFound(node_id)

    # -- browse loop

    def browse(self, instruction: str, start_url: str | None, policy, ctx,
               kernel=None) -> BrowseResult:
        trajectory = TaskTrajectory(task_id=ctx.task_id, depth=ctx.depth)
        turns = Trajectory(turns=[
            Turn("system", WEB_PROMPT_PREAMBLE + "\nInstruction: " + instruction)
        ])
        try:
            session = self.driver_factory(start_url)
        except DriverGone as exc:
            return BrowseResult(summary=str(exc), trajectory=trajectory,
                                status="error", turns=turns)

        malformed_streak = 0
        step = 0
        while step < ctx.limits.max_steps:
            try:
                observation = self.observe(session)
            except DriverGone as exc:
                return BrowseResult(summary=f"browser lost: {exc}",
                                    trajectory=trajectory, status="error", turns=turns)
            turns.turns.append(Turn("state", observation.render(), is_observation=True))
            condensed = condense_trajectory(turns, self.context_budget)
            prompt = "\n\n".join(t.content for t in condensed.turns)

            try:
                raw = policy.complete(prompt)
            except PolicyUnavailable as exc:
                return BrowseResult(summary=str(exc), trajectory=trajectory,
                                    status="error", turns=turns)
            turns.turns.append(Turn("policy", raw))

            try:
                decision = parse_decision(raw)
                malformed_streak = 0
            except MalformedDecision as exc:
                malformed_streak += 1
                turns.turns.append(Turn("state", f"error: {exc}"))
                if malformed_streak > WEB_RETRY_BUDGET:
                    return BrowseResult(summary=f"unparseable policy output: {exc}",
                                        trajectory=trajectory, status="error",
                                        turns=turns)
                continue

            record = TrajectoryRecord(
                step=step,
                decision_kind=(
                    f"web:{decision.kind}" if isinstance(decision, WebAction)
                    else decision.kind
                ),
                payload_digest=_digest(raw),
            )
            trajectory.records.append(record)
            step += 1

            if isinstance(decision, WebAction):
                if decision.kind == "Stop":
                    return BrowseResult(summary=decision.summary,
                                        trajectory=trajectory, status="completed",
                                        turns=turns)
                result = self.act(session, decision)
                if not result.ok:
                    turns.turns.append(Turn("state", f"action failed: {result.error}"))
                    record.fragments_added.append("error_report")
            elif isinstance(decision, StepDecision) and kernel is not None:
                summary = self._delegate(decision, ctx, policy, kernel, record)
                turns.turns.append(Turn("state", summary, is_observation=True))
                record.fragments_added.append("memory_recall")
            else:
                turns.turns.append(Turn(
                    "state", f"decision kind {decision.kind} is not available here"
                ))

        summary = self._summarize_on_limit(turns, policy)
        return BrowseResult(summary=summary, trajectory=trajectory,
                            status="step_limit", turns=turns)

    def _delegate(self, decision: StepDecision, ctx, policy, kernel,
                  record: TrajectoryRecord) -> str:
        """Non-web decisions inside the browse loop become deeper child tasks."""
        instruction = decision.query or decision.instruction or decision.content or ""
        try:
            child = kernel.run_child_task(ctx, instruction, policy)
        except DepthExceeded as exc:
            return f"error: {exc}"
        record.child = child.trajectory
        return child.answer

    @staticmethod
    def _summarize_on_limit(turns: Trajectory, policy) -> str:
        prompt = ("You ran out of browsing steps. Summarize what you found so far.\n\n"
                  + "\n\n".join(t.content for t in turns.turns))
        try:
            return policy.complete(prompt)
        except PolicyUnavailable:
            return "(step limit reached before Stop)"
