"""Acceptance suite: one test (one pass/fail line under pytest -v) per
top-level behavioural guarantee of the package."""

import random
import time

import pytest

from autokernel.decisions import ObservedState, StateFragment
from autokernel.errors import DepthExceeded
from autokernel.files import FileManager, paginate
from autokernel.kernel import Kernel, Limits, TaskContext
from autokernel.memory import (
    MemoryStore,
    RetrievalQuery,
    RuleBasedExtractor,
    embed_reference,
    ingest,
    merge_rankings,
    retrieve,
)
from autokernel.planlang import PlanRuntime
from autokernel.policy import (
    OBS_OMITTED,
    ScriptedPolicy,
    Trajectory,
    Turn,
    condense_trajectory,
)
from autokernel.web import SimWeb, WebPerception
from autokernel.web.ax import AXNode, AXSnapshot, dedup, observe_snapshot

from conftest import BROWSE_TASKS, SHOP_FIXTURE


def timed(limit):
    """Assert the wrapped block stays under its runtime budget."""
    class Timer:
        def __enter__(self):
            self.start = time.monotonic()
            return self

        def __exit__(self, *exc):
            if exc[0] is None:
                assert time.monotonic() - self.start < limit
    return Timer()


# 1. merge golden value ---------------------------------------------------------


def test_acceptance_merge_golden():
    with timed(1.0):
        result = merge_rankings([[("A", 0.8), ("B", 0.7)],
                                 [("B", 0.9), ("C", 0.6)], [], []])
        assert [(e.doc_id, e.score) for e in result.entries] == [
            ("B", 0.9), ("A", 0.8), ("C", 0.6)
        ]


# 2. decomposition golden value --------------------------------------------------


def test_acceptance_decomposition_golden():
    with timed(1.0):
        drafts = RuleBasedExtractor().extract(
            "The Yellow River is in China and has a length of 5,464 km."
        )
        assert [d.text for d in drafts] == [
            "The Yellow River is in China",
            "The length of Yellow River is 5,464 km",
        ]
        assert [(d.concept, d.perspective) for d in drafts] == [
            ("Yellow River", "country"),
            ("Yellow River", "length"),
        ]


# 3. merge property suite ---------------------------------------------------------


def test_acceptance_merge_property_suite():
    labels = ["doc_soft", "prop_soft", "concept_soft", "concept_hard"]

    def naive(lists):
        scores, prov = {}, {}
        for label, entries in zip(labels, lists):
            for doc, score in entries:
                scores.setdefault(doc, []).append(score)
                prov.setdefault(doc, set()).add(label)
        order = sorted(
            scores,
            key=lambda d: (-max(scores[d]),
                           min(labels.index(p) for p in prov[d]), d),
        )
        return [(d, max(scores[d])) for d in order]

    rng = random.Random(1234)
    with timed(10.0):
        for case in range(1000):
            lists = [
                [(f"doc{rng.randint(0, 9)}", round(rng.random(), 6))
                 for _ in range(rng.randint(0, 8))]
                for _ in range(4)
            ]
            result = merge_rankings(lists)
            got = [(e.doc_id, e.score) for e in result.entries]
            assert got == naive(lists), f"case {case}"
            scores = [s for _, s in got]
            assert scores == sorted(scores, reverse=True)
            assert len({d for d, _ in got}) == len(got)


# 4. retrieval round-trip ----------------------------------------------------------


def test_acceptance_retrieval_round_trip():
    subjects = ["River", "Bridge", "Museum", "Harbor", "Castle"]
    places = ["China", "France", "Japan", "Norway", "Brazil", "Egypt",
              "Canada", "Kenya", "India", "Spain"]
    with timed(30.0):
        store = MemoryStore()
        extractor = RuleBasedExtractor()
        texts, ids = [], []
        for i in range(100):
            text = (f"The {subjects[i % 5]} Number{i} is in "
                    f"{places[i % 10]} and has a length of {i + 1} km.")
            texts.append(text)
            ids.append(ingest(text, {"timestamp": "", "source": "note",
                                     "user_id": ""},
                              extractor, embed_reference, store))

        hits = 0
        for text, doc_id in zip(texts, ids):
            q = RetrievalQuery(text=text, query_emb=embed_reference(text), k=5)
            if retrieve(q, store).entries[0].doc_id == doc_id:
                hits += 1
        assert hits == 100

        # hard-matcher agreement with a naive set scan over mentioned concepts
        for q_concepts in ({"kenya"}, {"china", "france"}, {"norway", "nothere"}):
            q = RetrievalQuery(text="where is it",
                               query_emb=embed_reference("where is it"),
                               concepts=sorted(q_concepts), k=100)
            result = retrieve(q, store)
            hard = {e.doc_id for e in result.entries
                    if "concept_hard" in e.provenance}
            naive = {doc_id for doc_id in ids
                     if store.get(doc_id).mentioned_concepts & q_concepts}
            assert hard == naive
            for doc_id in naive:
                shared = store.get(doc_id).mentioned_concepts & q_concepts
                entry = next(e for e in result.entries if e.doc_id == doc_id)
                # the merged score can only improve on the hard overlap ratio
                assert entry.score >= len(shared) / len(q_concepts) - 1e-12


# 5. simulated-web end-to-end -------------------------------------------------------


def test_acceptance_simweb_task_suite():
    site = SimWeb.from_fixture(SHOP_FIXTURE)
    with timed(60.0):
        successes = 0
        for name, instruction, entries, goal in BROWSE_TASKS:
            sessions = []

            def factory(start_url, _sessions=sessions):
                session = site.open_session(start_url)
                _sessions.append(session)
                return session

            web = WebPerception(driver_factory=factory)
            ctx = TaskContext(instruction=instruction, depth=1)
            result = web.browse(instruction, None, ScriptedPolicy(entries), ctx)
            if result.status == "completed" and goal(sessions[0]):
                successes += 1
        assert successes == len(BROWSE_TASKS) == 10

        # negative control: identical decisions, coordinate targeting, the
        # overlapping banner intercepts the click and the goal is missed
        name, instruction, entries, goal = next(
            t for t in BROWSE_TASKS if t[0] == "restart_after_detour"
        )
        entries = [
            'Action: Click(role="button", name="Buy now")',
            'Action: Stop("bought")',
        ]
        sessions = []
        web = WebPerception(
            driver_factory=lambda u: sessions.append(site.open_session(u))
            or sessions[-1],
            targeting="coordinates",
        )
        ctx = TaskContext(instruction="buy now", depth=1)
        web.browse("buy now", None, ScriptedPolicy(entries), ctx)
        assert sessions[0].url != "sim://shop/checkout"
        assert sessions[0].url == "sim://shop/sale"


# 6. observation pipeline ------------------------------------------------------------


def _recorded_snapshot(seed: int) -> AXSnapshot:
    """Deterministic synthetic page with unique interactive (role, name) pairs."""
    rng = random.Random(seed)
    counter = [0]
    interactive = ["button", "link", "textbox", "checkbox"]
    passive = ["text", "heading", "generic", "group", "listitem"]

    def make(depth):
        counter[0] += 1
        if rng.random() < 0.4:
            role = rng.choice(interactive)
            name = f"{role} target {counter[0]}"
        else:
            role = rng.choice(passive)
            name = rng.choice(["", "section", f"label {counter[0]}"])
        kids = [make(depth + 1) for _ in range(rng.randint(0, 3))] if depth < 3 else []
        return AXNode(
            node_id=f"n{counter[0]}", role=role, name=name,
            bbox={"x": rng.randint(0, 1100), "y": rng.randint(0, 1400),
                  "w": rng.randint(20, 300), "h": rng.randint(10, 50)},
            states=set(rng.sample(["focusable", "hidden"], rng.randint(0, 1))),
            children=kids,
        )

    root = AXNode(node_id="root", role="document", name=f"page {seed}",
                  bbox={"x": 0, "y": 0, "w": 1280, "h": 1500},
                  children=[make(0) for _ in range(rng.randint(3, 7))])
    return AXSnapshot(root=root,
                      viewport={"w": 1280, "h": 720, "scroll_x": 0, "scroll_y": 0},
                      url=f"sim://recorded/{seed}", content_height=1500)


def test_acceptance_observation_pipeline():
    corpus = [_recorded_snapshot(seed) for seed in range(24)]
    assert len(corpus) >= 20
    for snapshot in corpus:
        deduped = dedup(snapshot)
        assert dedup(deduped).to_json() == deduped.to_json()  # idempotence

        before = {(n.role, n.name) for n in snapshot.root.walk()
                  if n.role in ("button", "link", "textbox", "checkbox")}
        after = {(n.role, n.name) for n in deduped.root.walk()
                 if n.role in ("button", "link", "textbox", "checkbox")}
        assert after == before  # interactive nodes survive dedup

        obs = observe_snapshot(snapshot, observation_budget=4000)
        assert obs.token_count <= 4000
        for (role, name), node_ids in obs.targets.items():
            if role in ("button", "link", "textbox", "checkbox"):
                assert len(node_ids) == 1, (role, name)  # unique resolution


# 7. state caching economy -------------------------------------------------------------


def test_acceptance_state_caching_economy():
    runtime = PlanRuntime()
    executed = []
    runtime.register_action("compute", lambda tag: executed.append(tag) or len(executed))
    sid = runtime.create_session()

    steps = [
        'a = compute("s1")',
        'b = a + compute("s2")',
        'c = b + compute("s3")\nprint(c)',
    ]
    for source in steps:
        assert runtime.execute(sid, source).status == "ok"
    assert executed == ["s1", "s2", "s3"]  # one execution per statement, ever
    assert runtime.get_binding(sid, "c") == 6

    # 8 concurrent sibling branches == serial isolation, bit-exact
    program = "append(items, n)\nmine = total + n"

    def seed(rt):
        s = rt.create_session()
        rt.execute(s, "items = [100]\ntotal = 1000")
        return s

    from concurrent.futures import ThreadPoolExecutor

    parallel_rt = PlanRuntime()
    parent = seed(parallel_rt)
    branches = [parallel_rt.branch(parent) for _ in range(8)]

    def run_branch(pair):
        n, bid = pair
        parallel_rt.execute(bid, f"n = {n}")
        parallel_rt.execute(bid, program)

    with ThreadPoolExecutor(max_workers=8) as pool:
        list(pool.map(run_branch, enumerate(branches)))

    serial_rt = PlanRuntime()
    serial_parent = seed(serial_rt)
    serial_branches = [serial_rt.branch(serial_parent) for _ in range(8)]
    for n, bid in enumerate(serial_branches):
        serial_rt.execute(bid, f"n = {n}")
        serial_rt.execute(bid, program)

    for par, ser in zip(branches, serial_branches):
        assert parallel_rt.bindings(par) == serial_rt.bindings(ser)
    assert parallel_rt.get_binding(parent, "items") == [100]


# 8. recursion --------------------------------------------------------------------------


def test_acceptance_recursion_depth_two_and_refusal():
    site = SimWeb.from_fixture(SHOP_FIXTURE)
    store = MemoryStore()
    ingest("The shopping budget is 30 dollars.",
           {"timestamp": "", "source": "note", "user_id": ""},
           RuleBasedExtractor(), embed_reference, store)

    web = WebPerception(driver_factory=lambda u: site.open_session(u))
    kernel = Kernel(plan_runtime=PlanRuntime(), memory_store=store, web=web)

    policy = ScriptedPolicy([
        # depth 0: spawn web perception
        'Action: PerceiveWeb(instruction="check the shop within budget", '
        'start_url="sim://shop")',
        # depth 1 (browse loop): consult memory -> depth-2 child task
        'Action: MemoryRead(query="what is the shopping budget", k=3)',
        # depth 2 child reasoning task
        'Action: FinalAnswer("The shopping budget is 30 dollars.")',
        # depth 1 again: stop
        'Action: Stop("shop visited, budget confirmed at 30 dollars")',
        # depth 0: final answer
        'Action: FinalAnswer("done within the 30 dollar budget")',
    ])
    ctx = TaskContext(instruction="shop within budget")
    state = ObservedState(components=[
        StateFragment(source="user_input", content="shop", step_of_origin=0)
    ])
    result = kernel.run_task(ctx, state, policy)
    assert result.status == "completed"

    web_record = result.trajectory.records[0]
    assert web_record.decision_kind == "perceive_web"
    assert web_record.child is not None and web_record.child.depth == 1
    memory_record = web_record.child.records[0]
    assert memory_record.child is not None and memory_record.child.depth == 2

    # refusal: perception one level past max_depth=3 raises
    deep_ctx = TaskContext(instruction="too deep", depth=3,
                           limits=Limits(max_depth=3))
    from autokernel.decisions import StepDecision

    with pytest.raises(DepthExceeded):
        kernel.spawn_perception(
            deep_ctx, "web",
            StepDecision(kind="perceive_web", instruction="x", start_url="sim://shop"),
            policy,
        )


# 9. condensation --------------------------------------------------------------------


def test_acceptance_condensation_forcing_budget():
    observations = [f"observation {i}: " + "detail " * 60 for i in range(4)]
    traj = Trajectory(turns=[
        Turn("policy", "Action: Scroll(direction=\"down\")"),
        Turn("state", observations[0], is_observation=True),
        Turn("policy", "Action: Scroll(direction=\"down\")"),
        Turn("state", observations[1], is_observation=True),
        Turn("policy", "Action: Goback()"),
        Turn("state", observations[2], is_observation=True),
        Turn("policy", "Action: Restart()"),
        Turn("state", observations[3], is_observation=True),
    ])
    # pick a budget that one omission cannot satisfy but two can
    from autokernel.tokenizer import count_tokens

    total = sum(count_tokens(t.content) for t in traj.turns)
    saving = count_tokens(observations[0]) - count_tokens(OBS_OMITTED)
    budget = total - saving - 1
    assert total - 2 * saving <= budget
    out = condense_trajectory(traj, budget)
    assert out.turns[1].content == OBS_OMITTED
    assert out.turns[3].content == OBS_OMITTED
    assert out.turns[5].content == observations[2]
    assert out.turns[7].content == observations[3]  # latest verbatim
    for i in (0, 2, 4, 6):  # action turns byte-identical
        assert out.turns[i].content == traj.turns[i].content

    again = condense_trajectory(out, budget)
    assert [t.content for t in again.turns] == [t.content for t in out.turns]


# 10. file perception ------------------------------------------------------------------


def test_acceptance_file_perception():
    rng = random.Random(20260823)

    # pagination losslessness on 50 random documents
    for _ in range(50):
        paragraphs = [" ".join(rng.choice(["ab", "cd", "efg"])
                               for _ in range(rng.randint(1, 90)))
                      for _ in range(rng.randint(1, 25))]
        text = "\n\n".join(paragraphs)
        assert "".join(paginate(text, rng.choice([100, 500, 3000]))) == text

    # substring counting against the naive oracle on 200 random pairs
    manager = FileManager(MemoryStore())
    alphabet = "xyzxy"
    for i in range(200):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 250)))
        term = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 3)))
        handle = manager.load(text.encode(), f"doc{i}.txt", media_type="text/plain")
        assert manager.count_occurrences(handle, term) == text.lower().count(term.lower())

    # constructed fixture: the term appears exactly five times, mixed case
    fixture = ("HTML is everywhere. We parse HTML and render html; "
               "then we lint Html.\n\nFinally we archive the hTML output.")
    handle = manager.load(fixture.encode(), "markup.txt", media_type="text/plain")
    assert manager.count_occurrences(handle, "HTML") == 5


# 11. gateway durability, concurrency, isolation -----------------------------------------


def test_acceptance_gateway_guarantees(tmp_path):
    import threading

    from fastapi.testclient import TestClient

    from autokernel.gateway import GatewayConfig, create_app

    users = {f"tok-{i}": f"user-{i}" for i in range(4)}
    path = str(tmp_path / "accept.db")

    def build(policy_factory):
        return TestClient(create_app(GatewayConfig(
            storage_path=path, users=dict(users), policy_factory=policy_factory,
        )))

    answer = ['Action: FinalAnswer("ok")']
    client = build(lambda: ScriptedPolicy(list(answer)))

    # per-user resources: session, task (trajectory + events), feedback
    resources = {}
    for token in users:
        headers = {"Authorization": f"Bearer {token}"}
        session_id = client.post("/sessions", headers=headers).json()["session_id"]
        task_id = client.post(f"/sessions/{session_id}/messages",
                              json={"content": "go"},
                              headers=headers).headers["x-task-id"]
        feedback_id = client.post("/feedback", headers=headers, json={
            "session_id": session_id, "turn_index": 0, "original_messages": [],
            "suggestion": f"note from {users[token]}",
        }).json()["feedback_id"]
        resources[token] = (session_id, task_id, feedback_id)

    # 4 users x 4 resource kinds: zero cross-user leaks
    leaks = 0
    for owner in users:
        session_id, task_id, feedback_id = resources[owner]
        for accessor in users:
            headers = {"Authorization": f"Bearer {accessor}"}
            expected = 200 if accessor == owner else 404
            for url in (f"/sessions/{session_id}",
                        f"/tasks/{task_id}/trajectory",
                        f"/tasks/{task_id}/events",
                        f"/feedback/{feedback_id}"):
                status = client.get(url, headers=headers).status_code
                if status != expected:
                    leaks += 1
    assert leaks == 0

    # 2-way concurrency: the second in-flight message is rejected with 409
    started, release = threading.Event(), threading.Event()

    class Blocking(ScriptedPolicy):
        def complete(self, prompt):
            started.set()
            release.wait(timeout=10)
            return super().complete(prompt)

    blocking_client = build(lambda: Blocking(list(answer)))
    owner = "tok-0"
    headers = {"Authorization": f"Bearer {owner}"}
    session_id = blocking_client.post("/sessions", headers=headers).json()["session_id"]

    first = {}
    worker = threading.Thread(target=lambda: first.update(r=blocking_client.post(
        f"/sessions/{session_id}/messages", json={"content": "one"}, headers=headers)))
    worker.start()
    assert started.wait(timeout=10)
    second = blocking_client.post(f"/sessions/{session_id}/messages",
                                  json={"content": "two"}, headers=headers)
    assert second.status_code == 409
    release.set()
    worker.join(timeout=10)
    assert first["r"].status_code == 200

    # durability: feedback and turns survive a full process-equivalent restart
    session_id, task_id, feedback_id = resources["tok-1"]
    headers = {"Authorization": "Bearer tok-1"}
    restarted = build(lambda: ScriptedPolicy(list(answer)))
    stored = restarted.get(f"/feedback/{feedback_id}", headers=headers)
    assert stored.status_code == 200
    assert stored.json()["suggestion"] == "note from user-1"
    turns = restarted.get(f"/sessions/{session_id}", headers=headers).json()["turns"]
    assert [t["role"] for t in turns] == ["user", "assistant"]
