"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class CtqaError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(CtqaError):
    """A document does not match the expected schema (missing, extra or malformed field)."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class IntegrityError(CtqaError):
    """A table was structurally loaded but violates the table invariants."""

    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class PromptError(CtqaError):
    pass


class MissingSlot(PromptError):
    def __init__(self, slots):
        self.slots = sorted(slots)
        super().__init__(f"missing binding for slot(s): {', '.join(self.slots)}")


class ExtraSlot(PromptError):
    def __init__(self, slots):
        self.slots = sorted(slots)
        super().__init__(f"binding(s) for undeclared slot(s): {', '.join(self.slots)}")


class SlotInjection(PromptError):
    """A binding value contains slot-marker syntax."""

    def __init__(self, slot: str, marker: str):
        self.slot = slot
        self.marker = marker
        super().__init__(f"binding for {slot} contains slot marker {marker!r}")


class GatewayError(CtqaError):
    """Base class for completion backend failures."""

    tag = "backend"


class ContextLengthExceeded(GatewayError):
    tag = "context_length"


class RateLimited(GatewayError):
    tag = "rate_limited"


class NetworkError(GatewayError):
    tag = "network"


class ReplayMiss(GatewayError):
    tag = "replay_miss"

    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"no recorded completion for request digest {digest}")


class StorageError(GatewayError):
    tag = "storage"


class MissingPair(CtqaError):
    def __init__(self, qa_ids):
        self.qa_ids = sorted(qa_ids)
        preview = ", ".join(self.qa_ids[:5])
        super().__init__(f"{len(self.qa_ids)} dataset pair(s) without prediction: {preview}")
