"""SimWeb: a deterministic in-process website engine for tests and demos.

Sites are declared as simweb/v1 fixtures: pages keyed by url, each page a
list of elements (optionally nested) with roles, names, boxes, and
`on_click` effects (navigation, query-templated navigation, or toggling a
dropdown group). Fixtures are immutable; all mutable state (typed values,
expanded toggles, scroll, history) lives on the per-session object.
"""

from __future__ import annotations

import json
import threading
import urllib.parse
from dataclasses import dataclass, field

from ..errors import DriverGone
from .ax import AXNode, AXSnapshot

SIMWEB_SCHEMA = "simweb/v1"

DEFAULT_VIEWPORT = {"w": 1280, "h": 720}


@dataclass
class SimElement:
    elem_id: str
    role: str
    name: str = ""
    bbox: tuple = (0, 0, 200, 24)
    states: set = field(default_factory=set)
    value: str | None = None
    z: int = 0
    visible_when: str | None = None  # toggle group gating visibility
    on_click: dict | None = None
    children: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> "SimElement":
        return cls(
            elem_id=data["id"],
            role=data["role"],
            name=data.get("name", ""),
            bbox=tuple(data.get("bbox", (0, 0, 200, 24))),
            states=set(data.get("states", [])),
            value=data.get("value"),
            z=data.get("z", 0),
            visible_when=data.get("visible_when"),
            on_click=data.get("on_click"),
            children=[cls.from_dict(c) for c in data.get("children", [])],
        )

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class SimPage:
    url: str
    title: str = ""
    content_height: int | None = None
    elements: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, url: str, data: dict) -> "SimPage":
        return cls(
            url=url,
            title=data.get("title", ""),
            content_height=data.get("content_height"),
            elements=[SimElement.from_dict(e) for e in data.get("elements", [])],
        )

    def walk(self):
        for element in self.elements:
            yield from element.walk()


class SimWeb:
    """An immutable simulated site; sessions are opened per browse task."""

    def __init__(self, start_url: str, pages: dict, viewport: dict | None = None):
        self.start_url = start_url
        self.pages = pages
        self.viewport = viewport or dict(DEFAULT_VIEWPORT)

    @classmethod
    def from_fixture(cls, fixture: dict | str) -> "SimWeb":
        if isinstance(fixture, str):
            fixture = json.loads(fixture)
        if fixture.get("schema") != SIMWEB_SCHEMA:
            raise ValueError(f"expected schema {SIMWEB_SCHEMA}")
        pages = {
            url: SimPage.from_dict(url, page)
            for url, page in fixture["pages"].items()
        }
        return cls(
            start_url=fixture["start_url"], pages=pages,
            viewport=fixture.get("viewport", dict(DEFAULT_VIEWPORT)),
        )

    def open_session(self, start_url: str | None = None) -> "SimWebSession":
        return SimWebSession(self, start_url or self.start_url)


class SimWebSession:
    """One browser session: isolated page state over an immutable site."""

    def __init__(self, site: SimWeb, start_url: str):
        self.site = site
        self.start_url = start_url
        self.url = start_url
        self.history: list[str] = []
        self.visited: list[str] = [start_url]
        self.scroll_y = 0
        self.values: dict[tuple, str] = {}
        self.toggles: set[str] = set()
        self.closed = False
        self._lock = threading.Lock()
        self._resolve_page()  # fail early on a dead start url

    def _resolve_page(self) -> SimPage:
        if self.closed:
            raise DriverGone("session closed")
        page = self.site.pages.get(self.url)
        if page is None:
            # unknown urls render an empty error page rather than crashing
            page = SimPage(url=self.url, title="Not found", elements=[
                SimElement(elem_id="nf", role="heading", name="Page not found",
                           bbox=(0, 0, 400, 40)),
            ])
        return page

    # -- observation

    def snapshot(self) -> AXSnapshot:
        page = self._resolve_page()

        def to_node(elem: SimElement) -> AXNode:
            states = set(elem.states)
            if elem.visible_when is not None and elem.visible_when not in self.toggles:
                states.add("hidden")
            value = self.values.get((self.url, elem.elem_id), elem.value)
            x, y, w, h = elem.bbox
            return AXNode(
                node_id=elem.elem_id, role=elem.role, name=elem.name, value=value,
                bbox={"x": x, "y": y, "w": w, "h": h}, states=states,
                children=[to_node(c) for c in elem.children],
            )

        root = AXNode(
            node_id="__doc__", role="document", name=page.title,
            bbox={"x": 0, "y": 0, "w": self.site.viewport["w"],
                  "h": page.content_height or self.site.viewport["h"]},
            children=[to_node(e) for e in page.elements],
        )
        return AXSnapshot(
            root=root,
            viewport={**self.site.viewport, "scroll_x": 0, "scroll_y": self.scroll_y},
            url=self.url,
            title=page.title,
            content_height=page.content_height,
        )

    # -- element lookup

    def _element(self, elem_id: str) -> SimElement | None:
        for elem in self._resolve_page().walk():
            if elem.elem_id == elem_id:
                return elem
        return None

    def _is_visible(self, elem: SimElement) -> bool:
        if "hidden" in elem.states:
            return False
        return elem.visible_when is None or elem.visible_when in self.toggles

    # -- actions

    def click(self, elem_id: str) -> str:
        with self._lock:
            elem = self._element(elem_id)
            if elem is None:
                raise DriverGone(f"element {elem_id} vanished")
            self._apply_click(elem)
            return self.url

    def click_at(self, x: float, y: float) -> str:
        """Coordinate hit-test: topmost (max z, then latest in document order)
        visible element containing the point gets the click."""
        with self._lock:
            hits = []
            for order, elem in enumerate(self._resolve_page().walk()):
                ex, ey, ew, eh = elem.bbox
                if self._is_visible(elem) and ex <= x < ex + ew and ey <= y < ey + eh:
                    hits.append((elem.z, order, elem))
            if not hits:
                return self.url
            _, _, top = max(hits, key=lambda t: (t[0], t[1]))
            self._apply_click(top)
            return self.url

    def _apply_click(self, elem: SimElement):
        effect = elem.on_click or {}
        if "goto" in effect:
            self._navigate(effect["goto"])
        elif "goto_query" in effect:
            spec = effect["goto_query"]
            value = self.values.get((self.url, spec["field"]), "")
            self._navigate(spec["template"].format(value=urllib.parse.quote(value)))
        elif "toggle" in effect:
            group = effect["toggle"]
            if group in self.toggles:
                self.toggles.remove(group)
            else:
                self.toggles.add(group)

    def _navigate(self, url: str):
        self.history.append(self.url)
        self.url = url
        self.visited.append(url)
        self.scroll_y = 0

    def type(self, elem_id: str, text: str):
        with self._lock:
            elem = self._element(elem_id)
            if elem is None:
                raise DriverGone(f"element {elem_id} vanished")
            # clear-then-fill: the new value replaces whatever was there
            self.values[(self.url, elem_id)] = text

    def scroll(self, direction: str):
        with self._lock:
            page = self._resolve_page()
            height = page.content_height or self.site.viewport["h"]
            step = self.site.viewport["h"]
            if direction == "down":
                self.scroll_y = min(max(0, height - step), self.scroll_y + step)
            else:
                self.scroll_y = max(0, self.scroll_y - step)

    def goback(self):
        with self._lock:
            if self.history:
                self.url = self.history.pop()
                self.visited.append(self.url)
                self.scroll_y = 0

    def restart(self):
        with self._lock:
            self._navigate(self.start_url)

    def close(self):
        self.closed = True
