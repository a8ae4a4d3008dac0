"""Session-cached execution of plan scripts.

Each session owns a namespace chain. Variables and function definitions
persist across execute() calls (notebook semantics: a runtime error keeps
the bindings written before the failing statement). branch() freezes the
current namespace and hands out isolated children, so concurrent consumers
of shared cached state cannot interfere: mutable values are copied into the
reading namespace the first time a branch touches them.

Statements inside a `parallel { ... }` block run on worker threads and join
before the next statement; fail-fast is off, every branch runs to completion
and the first error is reported with all successful branches' bindings kept.
"""

from __future__ import annotations

import copy
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..errors import (
    ActionUnknown,
    DuplicateAction,
    ParseError,
    PlanRuntimeError,
    StatementBudgetExceeded,
    UnknownSession,
)
from .language import (
    Assign,
    Binary,
    Call,
    ExprStmt,
    For,
    FuncDef,
    If,
    Index,
    ListExpr,
    Literal,
    MapExpr,
    Name,
    Parallel,
    Return,
    Unary,
    While,
    parse_script,
)

DEFAULT_STATEMENT_BUDGET = 10_000
DEFAULT_PREVIEW_LEN = 200

DIGEST_TAG = "digest/v1"


class Namespace:
    """One layer of the copy-on-branch namespace chain."""

    __slots__ = ("bindings", "parent", "frozen", "generation")

    def __init__(self, parent: "Namespace | None" = None):
        self.bindings: dict[str, object] = {}
        self.parent = parent
        self.frozen = False
        self.generation = 0 if parent is None else parent.generation + 1

    def lookup(self, name: str):
        if name in self.bindings:
            return self.bindings[name]
        ns = self.parent
        while ns is not None:
            if name in ns.bindings:
                value = ns.bindings[name]
                if isinstance(value, (list, dict)):
                    # Copy-on-read: a branch never shares mutable state
                    # with its frozen ancestors or siblings.
                    value = copy.deepcopy(value)
                    self.bindings[name] = value
                return value
            ns = ns.parent
        raise PlanRuntimeError(f"name {name!r} is not defined")

    def visible(self) -> dict[str, object]:
        """All visible bindings, innermost layer winning."""
        layers = []
        ns: Namespace | None = self
        while ns is not None:
            layers.append(ns.bindings)
            ns = ns.parent
        merged: dict[str, object] = {}
        for layer in reversed(layers):
            merged.update(layer)
        return merged


@dataclass
class PlanFunction:
    name: str
    params: list[str]
    body: list
    closure: Namespace

    def __repr__(self):
        return f"<function {self.name}({', '.join(self.params)})>"


@dataclass
class ExecutionResult:
    status: str  # ok | error
    outputs: list[str] = field(default_factory=list)
    error: dict | None = None
    new_bindings: list[str] = field(default_factory=list)
    statements_executed: int = 0
    actions_invoked: list[str] = field(default_factory=list)


class _ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


class _ExecState:
    """Mutable per-execute bookkeeping shared across parallel branches."""

    def __init__(self, budget: int):
        self.budget = budget
        self.statements = 0
        self.outputs: list[str] = []
        self.actions: list[str] = []
        self.lock = threading.Lock()

    def tick(self):
        with self.lock:
            self.statements += 1
            if self.statements > self.budget:
                raise StatementBudgetExceeded(
                    f"statement budget of {self.budget} exceeded"
                )


class _Session:
    def __init__(self):
        self.ns = Namespace()
        self.lock = threading.Lock()


_BUILTINS = {
    "len": len,
    "str": str,
    "num": float,
    "int": int,
    "abs": abs,
    "min": min,
    "max": max,
    "range": lambda *a: list(range(*map(int, a))),
    "keys": lambda m: list(m.keys()),
    "values": lambda m: list(m.values()),
    "upper": lambda s: s.upper(),
    "lower": lambda s: s.lower(),
    "split": lambda s, sep=" ": s.split(sep),
    "join": lambda sep, parts: sep.join(str(p) for p in parts),
    "contains": lambda hay, needle: needle in hay,
    "slice": lambda seq, a, b: seq[int(a):int(b)],
}


def _builtin_append(lst, item):
    lst.append(item)
    return lst


_BUILTINS["append"] = _builtin_append


class PlanRuntime:
    """Owns sessions, registered kernel actions, and execution."""

    def __init__(self, statement_budget: int = DEFAULT_STATEMENT_BUDGET,
                 preview_len: int = DEFAULT_PREVIEW_LEN):
        self.statement_budget = statement_budget
        self.preview_len = preview_len
        self._sessions: dict[str, _Session] = {}
        self._actions: dict[str, object] = {}
        self._registry_lock = threading.Lock()

    # -- session management

    def create_session(self, session_id: str | None = None) -> str:
        session_id = session_id or uuid.uuid4().hex
        with self._registry_lock:
            self._sessions[session_id] = _Session()
        return session_id

    def _session(self, session_id: str) -> _Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSession(session_id) from None

    def branch(self, session_id: str) -> str:
        """Fork the session: both sides see the frozen parent, writes diverge."""
        session = self._session(session_id)
        with session.lock:
            frozen = session.ns
            frozen.frozen = True
            session.ns = Namespace(parent=frozen)
            child = _Session()
            child.ns = Namespace(parent=frozen)
        child_id = uuid.uuid4().hex
        with self._registry_lock:
            self._sessions[child_id] = child
        return child_id

    # -- actions

    def register_action(self, name: str, handler):
        with self._registry_lock:
            if name in self._actions:
                raise DuplicateAction(name)
            self._actions[name] = handler

    # -- digest

    def namespace_digest(self, session_id: str) -> str:
        session = self._session(session_id)
        bindings = session.ns.visible()
        lines = [DIGEST_TAG]
        if not bindings:
            lines.append("(no cached state)")
            return "\n".join(lines)
        for name in sorted(bindings):
            value = bindings[name]
            kind = _kind_of(value)
            preview = _preview(value, self.preview_len)
            lines.append(f"{name}: {kind} = {preview}")
        return "\n".join(lines)

    # -- execution

    def execute(self, session_id: str, source: str) -> ExecutionResult:
        session = self._session(session_id)
        try:
            script = parse_script(source)
        except ParseError as exc:
            return ExecutionResult(
                status="error",
                error={"message": f"parse error: {exc}", "failing_statement_index": None},
            )

        with session.lock:
            state = _ExecState(self.statement_budget)
            before = set(session.ns.visible())
            error = None
            for index, stmt in enumerate(script.statements):
                try:
                    self._exec_stmt(stmt, session.ns, state)
                except PlanRuntimeError as exc:
                    error = {"message": str(exc), "failing_statement_index": index}
                    break
                except _ReturnSignal:
                    error = {
                        "message": "return outside function",
                        "failing_statement_index": index,
                    }
                    break
            after = session.ns.visible()
            new_bindings = sorted(set(after) - before)
            return ExecutionResult(
                status="error" if error else "ok",
                outputs=state.outputs,
                error=error,
                new_bindings=new_bindings,
                statements_executed=state.statements,
                actions_invoked=state.actions,
            )

    def get_binding(self, session_id: str, name: str):
        """Read a cached value (tests and kernel plumbing)."""
        return self._session(session_id).ns.visible().get(name)

    def bindings(self, session_id: str) -> dict[str, object]:
        return self._session(session_id).ns.visible()

    # -- interpreter

    def _exec_stmt(self, stmt, ns: Namespace, state: _ExecState):
        state.tick()
        if isinstance(stmt, Assign):
            value = self._eval(stmt.value, ns, state)
            self._assign(stmt.target, value, ns, state)
        elif isinstance(stmt, ExprStmt):
            self._eval(stmt.expr, ns, state)
        elif isinstance(stmt, If):
            for cond, body in stmt.branches:
                if cond is None or _truthy(self._eval(cond, ns, state)):
                    for inner in body:
                        self._exec_stmt(inner, ns, state)
                    break
        elif isinstance(stmt, While):
            while _truthy(self._eval(stmt.cond, ns, state)):
                for inner in stmt.body:
                    self._exec_stmt(inner, ns, state)
        elif isinstance(stmt, For):
            iterable = self._eval(stmt.iterable, ns, state)
            if not isinstance(iterable, (list, str, dict)):
                raise PlanRuntimeError(f"cannot iterate over {_kind_of(iterable)}")
            for item in list(iterable):
                ns.bindings[stmt.var] = item
                for inner in stmt.body:
                    self._exec_stmt(inner, ns, state)
        elif isinstance(stmt, FuncDef):
            ns.bindings[stmt.name] = PlanFunction(
                name=stmt.name, params=stmt.params, body=stmt.body, closure=ns
            )
        elif isinstance(stmt, Return):
            value = self._eval(stmt.value, ns, state) if stmt.value is not None else None
            raise _ReturnSignal(value)
        elif isinstance(stmt, Parallel):
            self._exec_parallel(stmt, ns, state)
        else:  # pragma: no cover
            raise PlanRuntimeError(f"unknown statement {stmt!r}")

    def _exec_parallel(self, stmt: Parallel, ns: Namespace, state: _ExecState):
        if not stmt.body:
            return

        results: list[tuple[dict, Exception | None]] = [({}, None)] * len(stmt.body)

        def run(i: int, inner):
            scratch = Namespace(parent=ns)
            try:
                self._exec_stmt(inner, scratch, state)
                return scratch.bindings, None
            except _ReturnSignal:
                return scratch.bindings, PlanRuntimeError("return outside function")
            except PlanRuntimeError as exc:
                return scratch.bindings, exc

        with ThreadPoolExecutor(max_workers=len(stmt.body)) as pool:
            futures = [pool.submit(run, i, inner) for i, inner in enumerate(stmt.body)]
            for i, fut in enumerate(futures):
                results[i] = fut.result()

        first_error = None
        for bindings, exc in results:
            if exc is None:
                ns.bindings.update(bindings)
            elif first_error is None:
                first_error = exc
        if first_error is not None:
            raise first_error

    def _assign(self, target, value, ns: Namespace, state: _ExecState):
        if isinstance(target, Name):
            ns.bindings[target.ident] = value
            return
        if isinstance(target, Index):
            container = self._eval(target.obj, ns, state)
            key = self._eval(target.key, ns, state)
            try:
                if isinstance(container, list):
                    container[int(key)] = value
                elif isinstance(container, dict):
                    container[key] = value
                else:
                    raise PlanRuntimeError(f"cannot index-assign into {_kind_of(container)}")
            except (IndexError, TypeError) as exc:
                raise PlanRuntimeError(str(exc)) from exc
            return
        raise PlanRuntimeError(f"invalid assignment target {target!r}")

    def _eval(self, expr, ns: Namespace, state: _ExecState):
        if isinstance(expr, Literal):
            return expr.value
        if isinstance(expr, Name):
            return ns.lookup(expr.ident)
        if isinstance(expr, ListExpr):
            return [self._eval(item, ns, state) for item in expr.items]
        if isinstance(expr, MapExpr):
            return {self._eval(k, ns, state): self._eval(v, ns, state) for k, v in expr.pairs}
        if isinstance(expr, Unary):
            operand = self._eval(expr.operand, ns, state)
            if expr.op == "-":
                if not isinstance(operand, (int, float)) or isinstance(operand, bool):
                    raise PlanRuntimeError("unary '-' needs a number")
                return -operand
            return not _truthy(operand)
        if isinstance(expr, Binary):
            return self._eval_binary(expr, ns, state)
        if isinstance(expr, Index):
            container = self._eval(expr.obj, ns, state)
            key = self._eval(expr.key, ns, state)
            try:
                if isinstance(container, list) or isinstance(container, str):
                    return container[int(key)]
                if isinstance(container, dict):
                    return container[key]
            except (IndexError, KeyError, TypeError, ValueError) as exc:
                raise PlanRuntimeError(f"bad index: {exc}") from exc
            raise PlanRuntimeError(f"cannot index {_kind_of(container)}")
        if isinstance(expr, Call):
            return self._eval_call(expr, ns, state)
        raise PlanRuntimeError(f"unknown expression {expr!r}")  # pragma: no cover

    def _eval_binary(self, expr: Binary, ns, state):
        op = expr.op
        if op == "and":
            left = self._eval(expr.left, ns, state)
            return self._eval(expr.right, ns, state) if _truthy(left) else left
        if op == "or":
            left = self._eval(expr.left, ns, state)
            return left if _truthy(left) else self._eval(expr.right, ns, state)
        left = self._eval(expr.left, ns, state)
        right = self._eval(expr.right, ns, state)
        try:
            if op == "+":
                if isinstance(left, str) or isinstance(right, str):
                    if not (isinstance(left, str) and isinstance(right, str)):
                        raise PlanRuntimeError("cannot add string and non-string")
                    return left + right
                if isinstance(left, list) and isinstance(right, list):
                    return left + right
                return left + right
            if op == "-":
                return left - right
            if op == "*":
                return left * right
            if op == "/":
                if right == 0:
                    raise PlanRuntimeError("division by zero")
                return left / right
            if op == "%":
                if right == 0:
                    raise PlanRuntimeError("modulo by zero")
                return left % right
            if op == "==":
                return left == right
            if op == "!=":
                return left != right
            if op == "<":
                return left < right
            if op == "<=":
                return left <= right
            if op == ">":
                return left > right
            if op == ">=":
                return left >= right
        except PlanRuntimeError:
            raise
        except (TypeError, ValueError) as exc:
            raise PlanRuntimeError(str(exc)) from exc
        raise PlanRuntimeError(f"unknown operator {op!r}")  # pragma: no cover

    def _eval_call(self, expr: Call, ns, state):
        args = [self._eval(arg, ns, state) for arg in expr.args]
        if isinstance(expr.func, Name):
            name = expr.func.ident
            # resolution order: user definitions shadow actions and builtins
            try:
                target = ns.lookup(name)
            except PlanRuntimeError:
                target = None
            if isinstance(target, PlanFunction):
                return self._call_function(target, args, state)
            if target is not None and callable(target):
                return self._call_host(name, target, args)
            if target is not None:
                raise PlanRuntimeError(f"{name!r} is not callable")
            if name in self._actions:
                state.actions.append(name)
                return self._call_host(name, self._actions[name], args)
            if name == "print":
                state.outputs.append(" ".join(_to_text(a) for a in args))
                return None
            if name in _BUILTINS:
                return self._call_host(name, _BUILTINS[name], args)
            raise ActionUnknown(f"unknown function or action {name!r}")
        target = self._eval(expr.func, ns, state)
        if isinstance(target, PlanFunction):
            return self._call_function(target, args, state)
        raise PlanRuntimeError("expression is not callable")

    def _call_function(self, func: PlanFunction, args, state):
        if len(args) != len(func.params):
            raise PlanRuntimeError(
                f"{func.name}() takes {len(func.params)} arguments, got {len(args)}"
            )
        frame = Namespace(parent=func.closure)
        for param, arg in zip(func.params, args):
            frame.bindings[param] = arg
        try:
            for stmt in func.body:
                self._exec_stmt(stmt, frame, state)
        except _ReturnSignal as sig:
            return sig.value
        return None

    @staticmethod
    def _call_host(name, handler, args):
        try:
            return handler(*args)
        except PlanRuntimeError:
            raise
        except Exception as exc:
            raise PlanRuntimeError(f"{name} failed: {exc}") from exc


def _truthy(value) -> bool:
    return bool(value)


def _kind_of(value) -> str:
    if isinstance(value, PlanFunction):
        return "function"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "text"
    if isinstance(value, list):
        return "list"
    if isinstance(value, dict):
        return "map"
    if value is None:
        return "none"
    return "handle"


def _to_text(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value)


def _preview(value, limit: int) -> str:
    text = _to_text(value) if not isinstance(value, str) else value
    if len(text) > limit:
        return text[:limit] + "…"
    return text
