"""Shared exception types for the autokernel package."""


class AutokernelError(Exception):
    """Base class for all autokernel errors."""


class PolicyUnavailable(AutokernelError):
    """The policy backend failed after exhausting retries, or the script ran out."""


class MalformedDecision(AutokernelError):
    """Policy output could not be parsed into a decision or web action."""


class Cancelled(AutokernelError):
    """External cancellation observed between steps."""


class DepthExceeded(AutokernelError):
    """A perception task would exceed the configured recursion depth."""


class BudgetUnsatisfiable(AutokernelError):
    """A prompt or observation cannot fit its token budget even fully condensed."""


class ParseError(AutokernelError):
    """Plan script rejected before execution; nothing was run."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class PlanRuntimeError(AutokernelError):
    """Plan script failed mid-execution; earlier bindings are retained."""

    def __init__(self, message, statement_index=None):
        super().__init__(message)
        self.statement_index = statement_index


class ActionUnknown(PlanRuntimeError):
    """Plan script called a kernel action that was never registered."""


class DuplicateAction(AutokernelError):
    """Attempt to register a kernel action under a name already taken."""


class UnknownSession(AutokernelError):
    """No plan-runtime session with the given id."""


class StatementBudgetExceeded(PlanRuntimeError):
    """A single execute() ran more statements than the configured budget."""


class ExtractorFailure(AutokernelError):
    """Proposition extraction failed; document stored degraded."""


class EmbedderFailure(AutokernelError):
    """Embedding failed; ingest rejected."""


class UnsupportedMediaType(AutokernelError):
    """No registered extractor accepts this media type."""


class ExtractionFailed(AutokernelError):
    """File content could not be extracted (empty or unreadable)."""


class RangeOutOfBounds(AutokernelError):
    """Page or range outside the file's pagination."""


class TargetNotFound(AutokernelError):
    """No node with the requested (role, name) in the current pruned tree."""


class AmbiguousTarget(AutokernelError):
    """Multiple nodes match the requested (role, name)."""

    def __init__(self, role, name, count):
        super().__init__(f"{count} elements match ({role!r}, {name!r})")
        self.count = count


class DriverGone(AutokernelError):
    """The browser session was lost."""


class PageCrashed(AutokernelError):
    """The page crashed while observing."""


class StorageUnavailable(AutokernelError):
    """The durable store rejected a write."""
