"""Exception types shared across the toolkit."""


class KbAdapterError(Exception):
    """Base class for all toolkit errors."""


class MalformedKB(KbAdapterError):
    """KB file could not be parsed or is not a JSON array of records."""


class EmptyKB(KbAdapterError):
    """KB contains no facts (on load, or after validation dropped everything)."""


class MissingTemplate(KbAdapterError):
    """A non-free-text slot has no atomic or composite template."""


class MissingSlot(KbAdapterError):
    """A fact lacks a slot that the composite template requires."""


class NothingToMask(KbAdapterError):
    """Statement has no attribute spans to corrupt."""


class EmptyResponse(KbAdapterError):
    """score_sequence called with an empty response."""


class InvalidConfig(KbAdapterError):
    """Model or training configuration violates an invariant."""


class StageAborted(KbAdapterError):
    """A training stage violated its freezing contract (or got unusable inputs)."""


class Rejected(KbAdapterError):
    """Perturbation sampling budget exhausted without an admissible distractor."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason
