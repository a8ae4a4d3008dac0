"""Policy model gateway: prompting, condensation, decision parsing, clients.

The policy emits tagged-block text: an optional `Thought:` line followed by
exactly one `Action:` line (plus a fenced ```plan block for ExecutePlan).
A deterministic scripted policy backs every test; the remote client speaks
a one-shot HTTP contract {prompt, decode_params} -> {text}.
"""

from __future__ import annotations

import json
import re
import threading
import time
import urllib.request
from dataclasses import dataclass, field

from .decisions import ObservedState, StepDecision, WebAction
from .errors import BudgetUnsatisfiable, MalformedDecision, PolicyUnavailable
from .tokenizer import count_tokens

OBS_OMITTED = "<|obs_omitted|>"

DEFAULT_CONTEXT_BUDGET = 16_000

SYSTEM_PREAMBLE = """\
You are the policy of an autopilot agent. At every step, read the cached
state digest and the observed state fragments, then emit exactly one decision
in the tagged-block format:

Thought: <your reasoning>
Action: <one action>

Available actions:
  FinalAnswer("answer text")
  ExecutePlan             (followed by a ```plan fenced code block)
  PerceiveWeb(instruction="...", start_url="...")
  PerceiveFile(file_id="...", request="...")
  MemoryRead(query="...", k=5)
  MemoryWrite(content="...")
Web-browsing actions (inside a web perception task):
  Click(role="...", name="...")
  Type(role="...", name="...", text="...")
  Scroll(direction="up"|"down")
  Goback()
  Restart()
  Stop("summary of findings")
"""


# ---------------------------------------------------------------------------
# Trajectory + condensation
# ---------------------------------------------------------------------------


@dataclass
class Turn:
    role: str  # system | state | policy
    content: str
    is_observation: bool = False


@dataclass
class Trajectory:
    turns: list[Turn] = field(default_factory=list)

    def token_count(self) -> int:
        return sum(count_tokens(t.content) for t in self.turns)


def condense_trajectory(traj: Trajectory, budget: int) -> Trajectory:
    """Replace observation turns, oldest first, with the omission marker.

    Policy turns are never touched and the most recent observation survives
    verbatim. Raises BudgetUnsatisfiable when even full condensation cannot
    meet the budget.
    """
    turns = [Turn(t.role, t.content, t.is_observation) for t in traj.turns]
    obs_indexes = [i for i, t in enumerate(turns) if t.is_observation]
    condensable = obs_indexes[:-1]  # latest observation is protected

    def total():
        return sum(count_tokens(t.content) for t in turns)

    for i in condensable:
        if total() <= budget:
            break
        if turns[i].content != OBS_OMITTED:
            turns[i] = Turn(turns[i].role, OBS_OMITTED, True)
    if total() > budget:
        raise BudgetUnsatisfiable(
            f"trajectory needs {total()} tokens even fully condensed; budget {budget}"
        )
    return Trajectory(turns=turns)


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------


def build_prompt(instruction: str, state: ObservedState, digest: str,
                 context_budget: int = DEFAULT_CONTEXT_BUDGET) -> str:
    """Deterministic prompt template with observation condensation.

    Fragments appear verbatim in step order; when the prompt would exceed the
    budget, earlier web/file observation fragments are replaced with the
    omission marker (most recent observation kept) before giving up.
    """

    def render(contents: list[str]) -> str:
        parts = [SYSTEM_PREAMBLE, "## Cached state", digest or "(no cached state)",
                 "## Task", instruction, "## Observed state"]
        if contents:
            parts.extend(contents)
        else:
            parts.append("(no state fragments yet)")
        parts.append("Emit exactly one decision now.")
        return "\n\n".join(parts)

    contents = [
        f"[{frag.source} @ step {frag.step_of_origin}]\n{frag.content}"
        for frag in state.components
    ]
    prompt = render(contents)
    if count_tokens(prompt) <= context_budget:
        return prompt

    obs_positions = [
        i for i, frag in enumerate(state.components)
        if frag.source in ("web_observation", "file_observation")
    ]
    for i in obs_positions[:-1]:
        frag = state.components[i]
        contents[i] = f"[{frag.source} @ step {frag.step_of_origin}]\n{OBS_OMITTED}"
        prompt = render(contents)
        if count_tokens(prompt) <= context_budget:
            return prompt
    raise BudgetUnsatisfiable(
        f"prompt needs {count_tokens(prompt)} tokens; budget {context_budget}"
    )


# ---------------------------------------------------------------------------
# Decision schema: render + parse
# ---------------------------------------------------------------------------

_ACTION_LINE = re.compile(r"^Action:\s*(?P<name>[A-Za-z]+)\s*(?:\((?P<args>.*)\))?\s*$")
_PLAN_BLOCK = re.compile(r"```plan\n(?P<body>.*?)```", re.DOTALL)

# one argument: optional keyword, then a JSON string or a number
_ARG = re.compile(
    r"""\s*(?:(?P<kw>[a-z_]+)\s*=\s*)?(?P<val>"(?:\\.|[^"\\])*"|-?\d+)\s*(?:,|$)"""
)


def _parse_args(raw: str) -> tuple[list, dict]:
    positional, keyword = [], {}
    pos = 0
    raw = raw.strip()
    while pos < len(raw):
        m = _ARG.match(raw, pos)
        if m is None:
            raise MalformedDecision(f"bad argument syntax near {raw[pos:pos + 30]!r}")
        value = m.group("val")
        value = json.loads(value) if value.startswith('"') else int(value)
        if m.group("kw"):
            keyword[m.group("kw")] = value
        else:
            positional.append(value)
        pos = m.end()
    return positional, keyword


def parse_decision(text: str) -> StepDecision | WebAction:
    """Parse tagged-block policy output into a decision or web action.

    Exactly one Action block is required; trailing prose after the block is
    ignored, but a second Action line is an ambiguity error.
    """
    lines = text.splitlines()
    matches = [(i, _ACTION_LINE.match(line.strip())) for i, line in enumerate(lines)]
    actions = [(i, m) for i, m in matches if m is not None]
    if not actions:
        raise MalformedDecision("no Action block found")
    if len(actions) > 1:
        raise MalformedDecision(f"{len(actions)} Action blocks found, expected 1")

    line_idx, m = actions[0]
    name = m.group("name")
    pos, kw = _parse_args(m.group("args") or "")

    def one(key: str, index: int = 0, required: bool = True, default=None):
        if key in kw:
            return kw[key]
        if len(pos) > index:
            return pos[index]
        if required:
            raise MalformedDecision(f"{name} is missing argument {key!r}")
        return default

    try:
        if name == "FinalAnswer":
            return StepDecision(kind="final_answer", answer=str(one("answer")))
        if name == "ExecutePlan":
            rest = "\n".join(lines[line_idx + 1:])
            block = _PLAN_BLOCK.search(rest)
            if block is None:
                raise MalformedDecision("ExecutePlan without a ```plan block")
            return StepDecision(kind="execute_plan", plan_source=block.group("body"))
        if name == "PerceiveWeb":
            return StepDecision(
                kind="perceive_web",
                instruction=str(one("instruction")),
                start_url=one("start_url", index=1, required=False),
            )
        if name == "PerceiveFile":
            return StepDecision(
                kind="perceive_file",
                file_id=str(one("file_id")),
                request=str(one("request", index=1)),
            )
        if name == "MemoryRead":
            return StepDecision(
                kind="memory_read",
                query=str(one("query")),
                k=int(one("k", index=1, required=False, default=5)),
            )
        if name == "MemoryWrite":
            return StepDecision(kind="memory_write", content=str(one("content")))
        if name == "Click":
            return WebAction(kind="Click", role=str(one("role")), name=str(one("name", 1)))
        if name == "Type":
            return WebAction(
                kind="Type", role=str(one("role")), name=str(one("name", 1)),
                text=str(one("text", 2)),
            )
        if name == "Scroll":
            return WebAction(kind="Scroll", direction=str(one("direction")))
        if name == "Goback":
            return WebAction(kind="Goback")
        if name == "Restart":
            return WebAction(kind="Restart")
        if name == "Stop":
            return WebAction(kind="Stop", summary=str(one("summary")))
    except ValueError as exc:
        raise MalformedDecision(str(exc)) from exc
    raise MalformedDecision(f"unknown action {name!r}")


def render_decision(decision: StepDecision | WebAction, thought: str = "") -> str:
    """Inverse of parse_decision (used by scripted policies and tests)."""
    q = json.dumps
    prefix = f"Thought: {thought}\n" if thought else ""
    if isinstance(decision, WebAction):
        if decision.kind == "Click":
            body = f"Action: Click(role={q(decision.role)}, name={q(decision.name)})"
        elif decision.kind == "Type":
            body = (f"Action: Type(role={q(decision.role)}, name={q(decision.name)}, "
                    f"text={q(decision.text)})")
        elif decision.kind == "Scroll":
            body = f"Action: Scroll(direction={q(decision.direction)})"
        elif decision.kind in ("Goback", "Restart"):
            body = f"Action: {decision.kind}()"
        else:
            body = f"Action: Stop({q(decision.summary)})"
        return prefix + body

    kind = decision.kind
    if kind == "final_answer":
        return prefix + f"Action: FinalAnswer({q(decision.answer)})"
    if kind == "execute_plan":
        return prefix + "Action: ExecutePlan\n```plan\n" + decision.plan_source + "```"
    if kind == "perceive_web":
        args = f"instruction={q(decision.instruction)}"
        if decision.start_url is not None:
            args += f", start_url={q(decision.start_url)}"
        return prefix + f"Action: PerceiveWeb({args})"
    if kind == "perceive_file":
        return prefix + (f"Action: PerceiveFile(file_id={q(decision.file_id)}, "
                         f"request={q(decision.request)})")
    if kind == "memory_read":
        return prefix + f"Action: MemoryRead(query={q(decision.query)}, k={decision.k})"
    return prefix + f"Action: MemoryWrite(content={q(decision.content)})"


# ---------------------------------------------------------------------------
# Policy handles
# ---------------------------------------------------------------------------


@dataclass
class DecodeParams:
    temperature: float = 0.0
    max_output_tokens: int = 2048


class PolicyHandle:
    """Base interface: complete(prompt) -> raw text."""

    def complete(self, prompt: str) -> str:  # pragma: no cover - interface
        raise NotImplementedError


class ScriptedPolicy(PolicyHandle):
    """Deterministic policy double: returns scripted entries in call order."""

    def __init__(self, entries: list[str]):
        self.entries = list(entries)
        self.calls: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def from_fixture(cls, path: str) -> "ScriptedPolicy":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(data["entries"])

    def complete(self, prompt: str) -> str:
        with self._lock:
            index = len(self.calls)
            self.calls.append(prompt)
        if index >= len(self.entries):
            raise PolicyUnavailable(
                f"scripted policy exhausted after {len(self.entries)} entries"
            )
        return self.entries[index]


class RemotePolicy(PolicyHandle):
    """HTTP inference client: POST {prompt, decode_params} -> {text}.

    `transport` is injectable for tests; the default posts JSON to the
    configured endpoint. Failures are retried with exponential backoff.
    """

    def __init__(self, endpoint: str = "", decode_params: DecodeParams | None = None,
                 transport=None, retries: int = 3, backoff: float = 0.2,
                 auth_token: str | None = None):
        self.endpoint = endpoint
        self.decode_params = decode_params or DecodeParams()
        self.retries = retries
        self.backoff = backoff
        self.auth_token = auth_token
        self.attempts = 0
        self._transport = transport or self._http_transport

    def _http_transport(self, prompt: str, decode_params: DecodeParams) -> str:
        payload = json.dumps({
            "prompt": prompt,
            "decode_params": {
                "temperature": decode_params.temperature,
                "max_output_tokens": decode_params.max_output_tokens,
            },
        }).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        req = urllib.request.Request(self.endpoint, data=payload, headers=headers)
        with urllib.request.urlopen(req, timeout=60) as resp:
            return json.loads(resp.read().decode("utf-8"))["text"]

    def complete(self, prompt: str) -> str:
        last_error = None
        for attempt in range(self.retries):
            self.attempts += 1
            try:
                return self._transport(prompt, self.decode_params)
            except Exception as exc:
                last_error = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * (2 ** attempt))
        raise PolicyUnavailable(f"inference failed after {self.retries} attempts: {last_error}")
