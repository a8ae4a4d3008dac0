"""Sandboxed imperative plan language and its session-cached runtime."""

from .language import parse_script
from .runtime import ExecutionResult, PlanRuntime

__all__ = ["parse_script", "PlanRuntime", "ExecutionResult"]
