"""Web perception: accessibility-tree observations and the browse loop."""

from .ax import AXNode, AXSnapshot, Observation, dedup, observe_snapshot, prune_viewport
from .browse import ActResult, BrowseResult, WebPerception
from .simweb import SimWeb, SimWebSession

__all__ = [
    "AXNode", "AXSnapshot", "Observation", "prune_viewport", "dedup",
    "observe_snapshot", "WebPerception", "ActResult", "BrowseResult",
    "SimWeb", "SimWebSession",
]
