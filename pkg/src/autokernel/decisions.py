"""Decision and web-action value types shared by the kernel, policy, and web layers."""

from __future__ import annotations

from dataclasses import dataclass, field

DECISION_KINDS = (
    "final_answer",
    "execute_plan",
    "perceive_web",
    "perceive_file",
    "memory_read",
    "memory_write",
)

WEB_ACTION_KINDS = ("Click", "Type", "Scroll", "Goback", "Restart", "Stop")


@dataclass
class StepDecision:
    kind: str
    # exactly one payload variant is populated, keyed by kind
    answer: str | None = None
    plan_source: str | None = None
    instruction: str | None = None
    start_url: str | None = None
    file_id: str | None = None
    request: str | None = None
    query: str | None = None
    k: int | None = None
    content: str | None = None

    def __post_init__(self):
        if self.kind not in DECISION_KINDS:
            raise ValueError(f"unknown decision kind {self.kind!r}")


@dataclass
class WebAction:
    kind: str
    role: str | None = None
    name: str | None = None
    text: str | None = None
    direction: str | None = None
    summary: str | None = None

    def __post_init__(self):
        if self.kind not in WEB_ACTION_KINDS:
            raise ValueError(f"unknown web action {self.kind!r}")
        if self.kind in ("Click", "Type") and (self.role is None or self.name is None):
            raise ValueError(f"{self.kind} requires a (role, name) target")
        if self.kind == "Type" and self.text is None:
            raise ValueError("Type requires text")
        if self.kind == "Scroll" and self.direction not in ("up", "down"):
            raise ValueError("Scroll requires direction up|down")
        if self.kind == "Stop" and self.summary is None:
            raise ValueError("Stop requires a summary")


@dataclass
class StateFragment:
    source: str  # user_input | execution_result | web_observation |
    #              file_observation | memory_recall | error_report
    content: str
    step_of_origin: int


@dataclass
class ObservedState:
    components: list[StateFragment] = field(default_factory=list)

    def append(self, fragment: StateFragment):
        self.components.append(fragment)

    def serialize(self) -> str:
        return "\n".join(
            f"[{frag.source} @ step {frag.step_of_origin}]\n{frag.content}"
            for frag in self.components
        )
