"""Accessibility-tree snapshots and the observe pipeline.

The pipeline is viewport filter -> node dedup -> serialize, and it is
deterministic: an identical snapshot always yields a byte-identical
observation. Snapshot interchange schema: ax/v1.

Dedup rule set v1:
  (a) drop structural wrappers: role in {generic, group, none} with an empty
      name (children are promoted into the parent);
  (b) collapse single-child chains where the parent repeats the child's name
      and carries no interactive role or state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..tokenizer import count_tokens

AX_SCHEMA = "ax/v1"

INTERACTIVE_ROLES = {"button", "link", "textbox", "checkbox", "combobox", "menuitem"}
WRAPPER_ROLES = {"generic", "group", "none"}

DEFAULT_OBSERVATION_BUDGET = 4000

TRUNCATION_MARKER = "… (observation truncated)"


@dataclass
class AXNode:
    node_id: str
    role: str
    name: str = ""
    value: str | None = None
    bbox: dict = field(default_factory=lambda: {"x": 0, "y": 0, "w": 0, "h": 0})
    states: set = field(default_factory=set)
    children: list = field(default_factory=list)

    def clone(self) -> "AXNode":
        return AXNode(
            node_id=self.node_id, role=self.role, name=self.name, value=self.value,
            bbox=dict(self.bbox), states=set(self.states),
            children=[c.clone() for c in self.children],
        )

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class AXSnapshot:
    root: AXNode
    viewport: dict  # {w, h, scroll_x, scroll_y}
    url: str
    title: str = ""
    content_height: int | None = None

    def clone(self) -> "AXSnapshot":
        return AXSnapshot(
            root=self.root.clone(), viewport=dict(self.viewport),
            url=self.url, title=self.title, content_height=self.content_height,
        )

    def to_json(self) -> str:
        def node(n: AXNode) -> dict:
            return {
                "node_id": n.node_id, "role": n.role, "name": n.name,
                "value": n.value, "bbox": n.bbox, "states": sorted(n.states),
                "children": [node(c) for c in n.children],
            }
        return json.dumps({
            "schema": AX_SCHEMA, "url": self.url, "title": self.title,
            "viewport": self.viewport, "content_height": self.content_height,
            "nodes": node(self.root),
        })

    @classmethod
    def from_json(cls, raw: str) -> "AXSnapshot":
        data = json.loads(raw)

        def node(d: dict) -> AXNode:
            return AXNode(
                node_id=d["node_id"], role=d["role"], name=d.get("name", ""),
                value=d.get("value"), bbox=d.get("bbox") or {"x": 0, "y": 0, "w": 0, "h": 0},
                states=set(d.get("states", [])),
                children=[node(c) for c in d.get("children", [])],
            )
        return cls(
            root=node(data["nodes"]), viewport=data["viewport"],
            url=data["url"], title=data.get("title", ""),
            content_height=data.get("content_height"),
        )


@dataclass
class Observation:
    lines: list[str]
    url: str
    scroll_position: dict  # {"page": f, "of": n}
    token_count: int
    # (role, name) -> node_id for every printed line, used by act()
    targets: dict = field(default_factory=dict)

    def render(self) -> str:
        header = f"url: {self.url} (page {self.scroll_position['page']} of {self.scroll_position['of']})"
        return "\n".join([header] + self.lines)


def _intersects_viewport(node: AXNode, viewport: dict) -> bool:
    b = node.bbox
    vx, vy = viewport.get("scroll_x", 0), viewport.get("scroll_y", 0)
    vw, vh = viewport["w"], viewport["h"]
    return (
        b["x"] < vx + vw and b["x"] + b["w"] > vx
        and b["y"] < vy + vh and b["y"] + b["h"] > vy
    )


def prune_viewport(snapshot: AXSnapshot) -> AXSnapshot:
    """Keep nodes intersecting the viewport (and not hidden), plus ancestors."""
    snap = snapshot.clone()

    def keep(node: AXNode) -> AXNode | None:
        children = [k for k in (keep(c) for c in node.children) if k is not None]
        visible = "hidden" not in node.states and _intersects_viewport(node, snap.viewport)
        if visible or children:
            node.children = children
            return node
        return None

    root = keep(snap.root)
    if root is None:
        root = AXNode(node_id=snap.root.node_id, role=snap.root.role, name=snap.root.name)
    snap.root = root
    return snap


def dedup(snapshot: AXSnapshot) -> AXSnapshot:
    """Remove redundant wrapper nodes; idempotent, interactive nodes preserved."""
    snap = snapshot.clone()

    def rewrite(node: AXNode) -> list[AXNode]:
        children = []
        for child in node.children:
            children.extend(rewrite(child))
        node.children = children
        # rule (a): nameless structural wrappers dissolve into the parent
        if node.role in WRAPPER_ROLES and not node.name:
            return children
        # rule (b): a non-interactive parent repeating its only child's name
        if (
            len(children) == 1
            and children[0].name == node.name
            and node.role not in INTERACTIVE_ROLES
            and not (node.states & {"focusable", "editable", "expanded"})
        ):
            return children
        return [node]

    rewritten = rewrite(snap.root)
    if len(rewritten) == 1:
        snap.root = rewritten[0]
    else:
        # root dissolved: keep it as a plain document container
        snap.root = AXNode(
            node_id=snapshot.root.node_id, role="document",
            name=snapshot.root.name, bbox=dict(snapshot.root.bbox),
            children=rewritten,
        )
    return snap


def serialize(snapshot: AXSnapshot,
              observation_budget: int = DEFAULT_OBSERVATION_BUDGET) -> Observation:
    """Render the (already pruned + deduped) tree as indexed role/name lines."""
    viewport = snapshot.viewport
    content_height = snapshot.content_height or max(
        (n.bbox["y"] + n.bbox["h"] for n in snapshot.root.walk()), default=viewport["h"]
    )
    pages = max(1, -(-int(content_height) // int(viewport["h"])))
    page = min(pages, int(viewport.get("scroll_y", 0)) // int(viewport["h"]) + 1)

    entries: list[tuple[str, AXNode]] = []
    idx = 0
    for node in snapshot.root.walk():
        if node is snapshot.root and node.role in ("document", "RootWebArea"):
            continue
        idx += 1
        annotations = ""
        shown_states = sorted(node.states - {"hidden"})
        if shown_states:
            annotations += " [" + ", ".join(shown_states) + "]"
        if node.value is not None:
            annotations += f" value='{node.value}'"
        entries.append((f"{idx} {node.role} '{node.name}'{annotations}", node))

    header_cost = count_tokens(f"url: {snapshot.url} (page {page} of {pages})")
    kept: list[str] = []
    targets: dict = {}
    total = header_cost
    truncated = False
    for line, node in entries:
        cost = count_tokens(line)
        if total + cost > observation_budget - count_tokens(TRUNCATION_MARKER):
            truncated = True
            break
        kept.append(line)
        targets.setdefault((node.role, node.name), []).append(node.node_id)
        total += cost
    if truncated:
        kept.append(TRUNCATION_MARKER)
        total += count_tokens(TRUNCATION_MARKER)

    return Observation(
        lines=kept,
        url=snapshot.url,
        scroll_position={"page": page, "of": pages},
        token_count=total,
        targets=targets,
    )


def observe_snapshot(snapshot: AXSnapshot,
                     observation_budget: int = DEFAULT_OBSERVATION_BUDGET) -> Observation:
    """Full pipeline: viewport filter -> dedup -> serialize."""
    return serialize(dedup(prune_viewport(snapshot)), observation_budget)
