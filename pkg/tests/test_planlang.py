"""Plan language and session runtime tests."""

import time
from concurrent.futures import ThreadPoolExecutor

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autokernel.errors import DuplicateAction, UnknownSession
from autokernel.planlang import PlanRuntime
from autokernel.planlang.language import ParseError, parse_script
from autokernel.planlang.runtime import DIGEST_TAG


@pytest.fixture
def rt():
    return PlanRuntime()


@pytest.fixture
def sid(rt):
    return rt.create_session()


class TestParsing:
    def test_parse_full_grammar(self):
        src = """
def fib(n) {
    if n < 2 { return n }
    return fib(n - 1) + fib(n - 2)
}
xs = []
for i in range(0, 6) { append(xs, fib(i)) }
total = 0
while len(xs) > 0 {
    total = total + xs[0]
    xs = slice(xs, 1, len(xs))
}
m = {"a": 1, "b": [2, 3]}
parallel {
    p = 1 + 1
    q = 2 * 2
}
"""
        script = parse_script(src)
        assert len(script.statements) == 7

    @pytest.mark.parametrize("src", [
        "x = ", "if x", "def f(", "x = 1 +", "while", "x = [1, 2",
    ])
    def test_parse_errors(self, src):
        with pytest.raises(ParseError):
            parse_script(src)


class TestSessionCaching:
    def test_bindings_persist_across_executions(self, rt, sid):
        assert rt.execute(sid, "x = 21").status == "ok"
        result = rt.execute(sid, "y = x * 2\nprint(y)")
        assert result.status == "ok"
        assert result.outputs == ["42"]
        assert rt.get_binding(sid, "y") == 42

    def test_functions_persist(self, rt, sid):
        rt.execute(sid, "def double(n) { return n * 2 }")
        result = rt.execute(sid, "print(double(8))")
        assert result.outputs == ["16"]

    def test_unknown_session(self, rt):
        with pytest.raises(UnknownSession):
            rt.execute("nope", "x = 1")

    def test_new_bindings_reported(self, rt, sid):
        rt.execute(sid, "a = 1")
        result = rt.execute(sid, "b = 2\nc = 3\na = 9")
        assert result.new_bindings == ["b", "c"]


class TestErrorSemantics:
    def test_partial_progress_kept(self, rt, sid):
        result = rt.execute(sid, "a = 1\nb = 2\nc = 1 / 0\nd = 4")
        assert result.status == "error"
        assert result.error["failing_statement_index"] == 2
        assert "division by zero" in result.error["message"]
        assert rt.get_binding(sid, "a") == 1
        assert rt.get_binding(sid, "b") == 2
        assert rt.get_binding(sid, "d") is None

    def test_undefined_name(self, rt, sid):
        result = rt.execute(sid, "x = missing + 1")
        assert result.status == "error"
        assert "missing" in result.error["message"]

    def test_parse_error_executes_nothing(self, rt, sid):
        result = rt.execute(sid, "x = 1\ny = ((")
        assert result.status == "error"
        assert result.error["failing_statement_index"] is None
        assert rt.get_binding(sid, "x") is None

    def test_statement_budget(self):
        rt = PlanRuntime(statement_budget=50)
        sid = rt.create_session()
        result = rt.execute(sid, "i = 0\nwhile i < 1000 { i = i + 1 }")
        assert result.status == "error"
        assert "budget" in result.error["message"]

    def test_return_at_top_level_is_error(self, rt, sid):
        result = rt.execute(sid, "return 3")
        assert result.status == "error"


class TestBranching:
    def test_branch_isolation(self, rt, sid):
        rt.execute(sid, "x = 1\nitems = [1]")
        child = rt.branch(sid)
        rt.execute(child, "x = 2\nappend(items, 99)")
        rt.execute(sid, "y = x")
        assert rt.get_binding(sid, "x") == 1
        assert rt.get_binding(sid, "y") == 1
        assert rt.get_binding(sid, "items") == [1]
        assert rt.get_binding(child, "x") == 2
        assert rt.get_binding(child, "items") == [1, 99]

    def test_child_sees_parent_functions(self, rt, sid):
        rt.execute(sid, "def inc(n) { return n + 1 }")
        child = rt.branch(sid)
        result = rt.execute(child, "print(inc(4))")
        assert result.outputs == ["5"]

    def test_writes_after_branch_invisible_to_child(self, rt, sid):
        rt.execute(sid, "x = 1")
        child = rt.branch(sid)
        rt.execute(sid, "x = 100\nz = 7")
        assert rt.get_binding(child, "x") == 1
        assert rt.get_binding(child, "z") is None

    def test_eight_concurrent_branches_mutate_shared_list(self, rt, sid):
        rt.execute(sid, "shared = [0]\nbase = 10")
        children = [rt.branch(sid) for _ in range(8)]

        def work(pair):
            i, cid = pair
            return rt.execute(cid, f"append(shared, {i})\nmine = base + {i}")

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(work, enumerate(children)))
        assert all(r.status == "ok" for r in results)
        for i, cid in enumerate(children):
            assert rt.get_binding(cid, "shared") == [0, i]
            assert rt.get_binding(cid, "mine") == 10 + i
        assert rt.get_binding(sid, "shared") == [0]


class TestParallel:
    def test_parallel_overlaps_in_time(self, rt, sid):
        rt.register_action("nap", lambda ms: time.sleep(ms / 1000) or ms)
        src = "parallel {\n    a = nap(120)\n    b = nap(120)\n}"
        start = time.monotonic()
        result = rt.execute(sid, src)
        elapsed = time.monotonic() - start
        assert result.status == "ok"
        assert elapsed < 0.22
        assert rt.get_binding(sid, "a") == 120
        assert rt.get_binding(sid, "b") == 120

    def test_parallel_no_fail_fast(self, rt, sid):
        result = rt.execute(sid, "parallel {\n    good = 1 + 1\n    bad = 1 / 0\n}")
        assert result.status == "error"
        assert rt.get_binding(sid, "good") == 2

    def test_parallel_binding_order_deterministic(self, rt, sid):
        result = rt.execute(sid, "parallel {\n    v = 1\n    v = 2\n    v = 3\n}")
        assert result.status == "ok"
        assert rt.get_binding(sid, "v") == 3


class TestActions:
    def test_registered_action_callable(self, rt, sid):
        rt.register_action("fetch", lambda url: f"<body of {url}>")
        result = rt.execute(sid, 'page = fetch("http://x")\nprint(page)')
        assert result.outputs == ["<body of http://x>"]
        assert result.actions_invoked == ["fetch"]

    def test_duplicate_action_rejected(self, rt):
        rt.register_action("f", lambda: 1)
        with pytest.raises(DuplicateAction):
            rt.register_action("f", lambda: 2)

    def test_unknown_action_is_runtime_error(self, rt, sid):
        result = rt.execute(sid, "x = summon()")
        assert result.status == "error"
        assert "summon" in result.error["message"]

    def test_action_exception_reported_not_raised(self, rt, sid):
        def bad():
            raise RuntimeError("driver exploded")

        rt.register_action("bad", bad)
        result = rt.execute(sid, "x = bad()")
        assert result.status == "error"
        assert "driver exploded" in result.error["message"]


class TestDigest:
    def test_empty_digest(self, rt, sid):
        assert rt.namespace_digest(sid) == f"{DIGEST_TAG}\n(no cached state)"

    def test_digest_sorted_and_typed(self, rt, sid):
        rt.execute(sid, 'b = "hi"\na = 3\nc = [1, 2]\ndef f(x) { return x }')
        digest = rt.namespace_digest(sid)
        lines = digest.splitlines()
        assert lines[0] == DIGEST_TAG
        assert lines[1] == "a: int = 3"
        assert lines[2] == "b: text = hi"
        assert lines[3] == "c: list = [1, 2]"
        assert lines[4].startswith("f: function =")

    def test_digest_previews_truncate(self, rt):
        rt = PlanRuntime(preview_len=10)
        sid = rt.create_session()
        rt.execute(sid, 'long = "abcdefghijklmnop"')
        digest = rt.namespace_digest(sid)
        assert "abcdefghij…" in digest
        assert "klmnop" not in digest

    def test_digest_deterministic(self, rt, sid):
        rt.execute(sid, "x = 1\ny = 2")
        assert rt.namespace_digest(sid) == rt.namespace_digest(sid)


class TestDeterminism:
    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(-50, 50), min_size=1, max_size=8))
    def test_arithmetic_program_repeats_exactly(self, values):
        src_lines = [f"xs = {values!r}".replace("'", '"'), "total = 0",
                     "for v in xs {", "    total = total * 2 + v", "}", "print(total)"]
        src = "\n".join(src_lines)
        outputs = set()
        for _ in range(3):
            rt = PlanRuntime()
            sid = rt.create_session()
            result = rt.execute(sid, src)
            assert result.status == "ok"
            outputs.add(tuple(result.outputs))
        assert len(outputs) == 1

    def test_no_host_io_primitives(self, rt, sid):
        for name in ("open", "exec", "eval", "__import__", "getattr"):
            result = rt.execute(sid, f'x = {name}("anything")')
            assert result.status == "error", name


class TestOperators:
    @pytest.mark.parametrize("src,expected", [
        ("print(2 + 3 * 4)", "14"),
        ("print((2 + 3) * 4)", "20"),
        ("print(10 % 3)", "1"),
        ("print(-5 + 2)", "-3"),
        ('print("a" + "b")', "ab"),
        ("print(1 < 2 and 3 > 2)", "true"),
        ("print(not (1 == 1))", "false"),
        ('print(contains([1, 2], 2))', "true"),
        ('print(len("hello"))', "5"),
        ('print(join("-", [1, 2, 3]))', "1-2-3"),
        ('print(upper("abc"))', "ABC"),
        ('m = {"k": 5}\nprint(m["k"])', "5"),
    ])
    def test_expression_values(self, rt, sid, src, expected):
        result = rt.execute(sid, src)
        assert result.status == "ok", result.error
        assert result.outputs[-1] == expected

    def test_string_number_concat_rejected(self, rt, sid):
        result = rt.execute(sid, 'x = "a" + 1')
        assert result.status == "error"
