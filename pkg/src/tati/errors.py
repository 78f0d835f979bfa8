"""Exception hierarchy shared by every stage."""

from __future__ import annotations

from typing import Any


class TatiError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateBox(TatiError, ValueError):
    pass


class BackendError(TatiError):
    """A backend misbehaved. ``payload`` keeps whatever raw data came back."""

    def __init__(self, message: str, payload: Any = None):
        super().__init__(message)
        self.payload = payload


class BackendUnreachable(BackendError):
    pass


class BackendMalformed(BackendError):
    pass


class BadAnnotation(TatiError, ValueError):
    pass


class InsufficientDemos(TatiError):
    def __init__(self, pair: Any, have: int, need: int):
        super().__init__(f"{pair}: have {have} demonstrations, need {need}")
        self.pair = pair
        self.have = have
        self.need = need


class FallbackExhausted(TatiError):
    """Whole-context translation and the per-box fallback both failed."""

    def __init__(self, message: str, partial: dict[int, str], issues: list | None = None):
        super().__init__(message)
        self.partial = partial
        self.issues = issues or []


class EmptySource(TatiError, ValueError):
    pass


class BadRatio(TatiError, ValueError):
    pass


class UnsplittableUnit(TatiError, ValueError):
    pass


class UnrenderableScript(TatiError):
    pass


class SchemaViolation(TatiError, ValueError):
    def __init__(self, record: str, field: str, detail: str = ""):
        msg = f"{record}: field {field!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.record = record
        self.field = field


class MissingImage(TatiError, FileNotFoundError):
    pass


class LengthMismatch(TatiError, ValueError):
    pass


class EmptyCorpus(TatiError, ValueError):
    pass


class AlignmentError(TatiError, ValueError):
    pass


class DegenerateInput(TatiError, ValueError):
    pass


class ConfigError(TatiError, ValueError):
    pass


class StageError(TatiError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
