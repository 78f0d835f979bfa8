"""Translator backends and the whole-context / per-box translation modes."""

from __future__ import annotations

import enum
import logging
import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .boxtag import (
    IssueKind,
    ParseIssue,
    ParseResult,
    ParseStatus,
    TaggedSequence,
    count_boxes,
    parse_tagged,
    serialize_tagged,
)
from .core import ImageDoc, RecognizedLine, image_to_b64
from .errors import BackendMalformed, BackendUnreachable, FallbackExhausted
from .prompting import DemoStore, LanguagePair, PromptTemplate, build_prompt, extract_input
from .wire import post_json

log = logging.getLogger(__name__)


class TranslatorKind(str, enum.Enum):
    REMOTE_TEXT = "remote_text"
    REMOTE_VISION = "remote_vision"
    MOCK = "mock"


class MockMode(str, enum.Enum):
    IDENTITY = "identity"
    TABLE = "table"
    SCRIPTED_RAW = "scripted_raw"


class TranslationMode(str, enum.Enum):
    WHOLE_CONTEXT = "WHOLE_CONTEXT"
    PER_BOX = "PER_BOX"
    PER_BOX_FALLBACK = "PER_BOX_FALLBACK"


class MockTranslator:
    """Deterministic stand-in for an LLM.

    IDENTITY echoes the tagged input, TABLE maps each box text through
    ``table`` (unknown texts pass through), SCRIPTED_RAW returns queued raw
    responses verbatim and behaves like IDENTITY once the queue is empty.
    ``fail_calls`` lists 0-based call numbers that raise BackendUnreachable;
    ``down`` makes every call fail.
    """

    def __init__(
        self,
        mode: MockMode | str = MockMode.IDENTITY,
        table: Mapping[str, str] | None = None,
        raw_responses: Sequence[str] | None = None,
        fail_calls: Sequence[int] = (),
        down: bool = False,
    ):
        self.mode = MockMode(mode)
        if self.mode is MockMode.TABLE and table is None:
            raise ValueError("TABLE mock needs a table")
        if self.mode is MockMode.SCRIPTED_RAW and raw_responses is None:
            raise ValueError("SCRIPTED_RAW mock needs raw_responses")
        self.table = dict(table or {})
        self._raw = deque(raw_responses or ())
        self.fail_calls = frozenset(fail_calls)
        self.down = down
        self.calls: list[str] = []
        self._lock = threading.Lock()

    def complete(self, prompt: str, source: str | None = None) -> str:
        with self._lock:
            call_no = len(self.calls)
            self.calls.append(prompt)
            raw = self._raw.popleft() if self.mode is MockMode.SCRIPTED_RAW and self._raw else None
        if self.down or call_no in self.fail_calls:
            raise BackendUnreachable(f"mock translator call {call_no} failed")
        if raw is not None:
            return raw
        tagged = source if source is not None else extract_input(prompt)
        if self.mode is MockMode.TABLE:
            n = count_boxes(tagged)
            parsed = parse_tagged(tagged, n, strict=False)
            return serialize_tagged([self.table.get(t, t) for t in parsed.ordered(n)]).canonical_text
        return tagged

    @classmethod
    def from_json(cls, data: Mapping) -> MockTranslator:
        return cls(
            data.get("mode", "identity"),
            data.get("table"),
            data.get("raw_responses"),
            data.get("fail_calls", ()),
            data.get("down", False),
        )


@dataclass
class TranslatorBackendRef:
    kind: TranslatorKind = TranslatorKind.MOCK
    endpoint: str | None = None
    accepts_image: bool = False
    timeout: float = 60.0
    max_attempts: int = 3
    options: dict[str, Any] = field(default_factory=dict)
    mock: MockTranslator | None = None

    def __post_init__(self):
        self.kind = TranslatorKind(self.kind)
        if self.kind is TranslatorKind.REMOTE_VISION:
            self.accepts_image = True
        if self.kind is not TranslatorKind.MOCK and not self.endpoint:
            raise ValueError(f"{self.kind.value} translator needs an endpoint")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.kind is TranslatorKind.MOCK and self.mock is None:
            self.mock = MockTranslator()

    def complete(self, prompt: str, source: str | None = None, image: ImageDoc | None = None) -> str:
        if self.kind is TranslatorKind.MOCK:
            return self.mock.complete(prompt, source)
        payload: dict[str, Any] = {"prompt": prompt}
        if image is not None and self.accepts_image:
            payload["image_b64"] = image_to_b64(image)
        if self.options:
            payload["options"] = self.options
        reply = post_json(self.endpoint, "translate", payload, self.timeout)
        if not isinstance(reply, dict) or not isinstance(reply.get("text"), str):
            raise BackendMalformed("translate reply lacks a 'text' string", reply)
        return reply["text"]


@dataclass
class TranslationOutcome:
    texts: dict[int, str]
    mode: TranslationMode
    attempts: int
    issues: list[ParseIssue] = field(default_factory=list)

    def ordered(self) -> list[str]:
        return [self.texts[i] for i in sorted(self.texts)]

    def to_json(self) -> dict:
        return {
            "texts": {str(k): v for k, v in sorted(self.texts.items())},
            "mode": self.mode.value,
            "attempts": self.attempts,
            "issues": [i.to_json() for i in self.issues],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> TranslationOutcome:
        return cls(
            {int(k): v for k, v in data["texts"].items()},
            TranslationMode(data["mode"]),
            int(data["attempts"]),
            [ParseIssue.from_json(i) for i in data.get("issues", [])],
        )


@dataclass
class PromptDeps:
    store: DemoStore = field(default_factory=DemoStore.bundled)
    template: PromptTemplate = field(default_factory=PromptTemplate.default)


def correction_suffix(result: ParseResult, n: int) -> str:
    missing = result.missing(n)
    dup = sorted({i.index for i in result.issues if i.kind is IssueKind.DUPLICATE_INDEX and i.index is not None})
    parts = []
    if missing:
        parts.append("missing " + ", ".join(f"<box{i}>" for i in missing))
    if dup:
        parts.append("duplicated " + ", ".join(f"<box{i}>" for i in dup))
    detail = "; ".join(parts) or "malformed tags"
    return (
        f"\nYour previous answer was not in the required format ({detail}). "
        f"Answer again with exactly one <boxN>...</boxN> pair for each N from 0 to {n - 1}.\n"
    )


def translate_whole(
    source: TaggedSequence,
    pair: LanguagePair,
    backend: TranslatorBackendRef,
    deps: PromptDeps | None = None,
    image: ImageDoc | None = None,
    strict: bool = False,
    parallelism: int = 1,
) -> TranslationOutcome:
    """Translate all boxes in one call, repairing or re-prompting as needed.

    With ``strict`` the response is parsed strictly and never retried;
    indices that fail to parse come back as empty strings.
    """
    n = source.n_boxes
    if n < 1:
        raise ValueError("nothing to translate")
    if image is not None and not backend.accepts_image:
        raise ValueError("this backend does not accept images")
    deps = deps or PromptDeps()
    prompt = build_prompt(pair, source, deps.store, deps.template)
    issues: list[ParseIssue] = []
    best: ParseResult | None = None
    attempts = 0
    limit = 1 if strict else backend.max_attempts
    current = prompt
    while attempts < limit:
        attempts += 1
        raw = backend.complete(current, source.canonical_text, image)
        result = parse_tagged(raw, n, strict=strict)
        issues.extend(result.issues)
        if result.status is not ParseStatus.FAILED:
            texts = {k: v.strip() for k, v in sorted(result.texts.items())}
            return TranslationOutcome(texts, TranslationMode.WHOLE_CONTEXT, attempts, issues)
        if best is None or len(result.texts) > len(best.texts):
            best = result
        log.info("attempt %d: %d/%d boxes parsed", attempts, len(result.texts), n)
        current = prompt + correction_suffix(result, n)

    assert best is not None
    if strict:
        texts = {i: best.texts.get(i, "").strip() for i in range(n)}
        return TranslationOutcome(texts, TranslationMode.WHOLE_CONTEXT, attempts, issues)

    missing = best.missing(n)
    texts = dict(best.texts)
    sources = _source_texts(source)
    fallback = _per_box_calls([sources[i] for i in missing], pair, backend, deps, parallelism)
    failed = []
    for i, (text, box_issues, ok) in zip(missing, fallback):
        texts[i] = text
        issues.extend(_reindex(box_issues, i))
        if not ok:
            failed.append(i)
    attempts += len(missing)
    if failed:
        raise FallbackExhausted(
            f"per-box fallback failed for boxes {failed}",
            {k: v for k, v in texts.items() if k not in failed},
            issues,
        )
    return TranslationOutcome(dict(sorted(texts.items())), TranslationMode.PER_BOX_FALLBACK, attempts, issues)


def _source_texts(source: TaggedSequence) -> list[str]:
    return parse_tagged(source.canonical_text, source.n_boxes, strict=True).ordered(source.n_boxes)


def _reindex(issues: list[ParseIssue], index: int) -> list[ParseIssue]:
    return [ParseIssue(i.kind, f"box{index}: {i.detail}", None, index) for i in issues]


def _per_box_calls(texts, pair, backend, deps, parallelism):
    def one(text: str):
        src = serialize_tagged([text])
        prompt = build_prompt(pair, src, deps.store, deps.template)
        try:
            raw = backend.complete(prompt, src.canonical_text)
        except (BackendUnreachable, BackendMalformed) as exc:
            return "", [ParseIssue(IssueKind.MISSING_INDEX, f"backend failure: {exc}")], False
        result = parse_tagged(raw, 1, strict=False)
        if result.status is ParseStatus.FAILED:
            return "", result.issues, False
        return result.texts[0], result.issues, True

    if parallelism <= 1 or len(texts) <= 1:
        return [one(t) for t in texts]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, texts))


def translate_per_box(
    lines: Sequence[RecognizedLine | str],
    pair: LanguagePair,
    backend: TranslatorBackendRef,
    deps: PromptDeps | None = None,
    parallelism: int = 1,
) -> TranslationOutcome:
    """One backend call per box. Failed boxes come back empty with an issue."""
    if not lines:
        raise ValueError("nothing to translate")
    deps = deps or PromptDeps()
    texts_in = [ln.text if isinstance(ln, RecognizedLine) else ln for ln in lines]
    results = _per_box_calls(texts_in, pair, backend, deps, parallelism)
    texts: dict[int, str] = {}
    issues: list[ParseIssue] = []
    for i, (text, box_issues, _ok) in enumerate(results):
        texts[i] = text
        issues.extend(_reindex(box_issues, i))
    return TranslationOutcome(texts, TranslationMode.PER_BOX, len(texts_in), issues)
