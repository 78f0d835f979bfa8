"""The ``<box{i}>...</box{i}>`` protocol.

Serialization is canonical: entries in index order, no separators. Parsing
runs in one of two modes. Strict parsing accepts only the canonical grammar
(whitespace between entries aside). Lenient parsing repairs the corruption
classes that LLM translators produce in practice:

* R1 a closing tag is missing: the entry closes at the next open tag or at
  the end of input
* R2 entries come out of index order: texts are collected by index
* R3 an index repeats: the first occurrence wins
* R4 an index is out of range: the entry is dropped
* R5 text sits between entries: it is dropped

Escaping: a run of ``<`` that precedes ``box``, ``/box`` or the end of an
entry's content is doubled on the way out and halved on the way back, so a
tag is only recognized where its ``<`` is preceded by an even number of
``<`` characters.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

TAG_RE = re.compile(r"<(/?)box([0-9]+)>")
# near-miss tags such as "< box 1 >", "<Box1>", "</ box1>", "<box1/>"
LOOSE_TAG_RE = re.compile(r"<\s*(/?)\s*box\s*([0-9]+)\s*/?\s*>", re.IGNORECASE)
_ESC_RE = re.compile(r"(<+)(?=/?box|\Z)")


class IssueKind(str, enum.Enum):
    MISSING_CLOSE = "MISSING_CLOSE"
    MISSING_OPEN = "MISSING_OPEN"
    DUPLICATE_INDEX = "DUPLICATE_INDEX"
    UNKNOWN_INDEX = "UNKNOWN_INDEX"
    MISSING_INDEX = "MISSING_INDEX"
    STRAY_TEXT = "STRAY_TEXT"
    MALFORMED_TAG = "MALFORMED_TAG"
    OUT_OF_ORDER = "OUT_OF_ORDER"


class ParseStatus(str, enum.Enum):
    CLEAN = "CLEAN"
    REPAIRED = "REPAIRED"
    FAILED = "FAILED"


@dataclass(frozen=True)
class ParseIssue:
    kind: IssueKind
    detail: str = ""
    span: tuple[int, int] | None = None
    index: int | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "detail": self.detail}
        if self.index is not None:
            out["index"] = self.index
        if self.span is not None:
            out["span"] = list(self.span)
        return out

    @classmethod
    def from_json(cls, data: dict) -> ParseIssue:
        span = data.get("span")
        return cls(IssueKind(data["kind"]), data.get("detail", ""), tuple(span) if span else None, data.get("index"))


@dataclass
class ParseResult:
    texts: dict[int, str]
    issues: list[ParseIssue] = field(default_factory=list)
    status: ParseStatus = ParseStatus.CLEAN

    def missing(self, n: int) -> list[int]:
        return [i for i in range(n) if i not in self.texts]

    def ordered(self, n: int) -> list[str]:
        return [self.texts.get(i, "") for i in range(n)]


@dataclass(frozen=True)
class TaggedSequence:
    canonical_text: str
    n_boxes: int

    def __str__(self) -> str:
        return self.canonical_text


def escape(text: str) -> str:
    return _ESC_RE.sub(lambda m: m.group(1) * 2, text)


def unescape(text: str) -> str:
    return _ESC_RE.sub(lambda m: "<" * ((len(m.group(1)) + 1) // 2), text)


def serialize_tagged(lines) -> TaggedSequence:
    parts = [f"<box{i}>{escape(s)}</box{i}>" for i, s in enumerate(lines)]
    return TaggedSequence("".join(parts), len(parts))


@dataclass
class _Tag:
    closing: bool
    index: int
    start: int  # position of the tag's own "<"
    end: int
    malformed: bool = False


def _is_tag_start(s: str, pos: int) -> bool:
    # a "<" opens a tag only if preceded by an even run of "<"
    k = 0
    j = pos - 1
    while j >= 0 and s[j] == "<":
        k += 1
        j -= 1
    return k % 2 == 0


def _tokenize(s: str) -> list[_Tag]:
    tags: list[_Tag] = []
    pos = 0
    n = len(s)
    while pos < n:
        lt = s.find("<", pos)
        if lt < 0:
            break
        m = TAG_RE.match(s, lt)
        if m and _is_tag_start(s, lt):
            digits = m.group(2)
            padded = len(digits) > 1 and digits[0] == "0"
            tags.append(_Tag(m.group(1) == "/", int(digits), lt, m.end(), malformed=padded))
            pos = m.end()
            continue
        m = LOOSE_TAG_RE.match(s, lt)
        if m and _is_tag_start(s, lt) and not TAG_RE.fullmatch(m.group(0)):
            tags.append(_Tag(m.group(1) == "/", int(m.group(2)), lt, m.end(), malformed=True))
            pos = m.end()
            continue
        pos = lt + 1
    return tags


def parse_tagged(s: str, n: int, strict: bool = True) -> ParseResult:
    """Recover per-box texts from a tagged string. Never raises on bad input.

    Strict mode returns contents verbatim; lenient mode also trims the
    whitespace translators like to put around entry contents.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    issues: list[ParseIssue] = []
    entries: list[tuple[int, int, int, str]] = []  # (index, start, end, raw content)

    tags = _tokenize(s)
    cursor = 0  # end of the last consumed token
    open_tag: _Tag | None = None

    def stray(a: int, b: int):
        chunk = s[a:b]
        if chunk.strip():
            issues.append(ParseIssue(IssueKind.STRAY_TEXT, f"dropped {chunk.strip()[:40]!r}", (a, b)))

    for tag in tags:
        if tag.malformed:
            issues.append(
                ParseIssue(IssueKind.MALFORMED_TAG, f"non-canonical tag {s[tag.start:tag.end]!r}", (tag.start, tag.end), tag.index)
            )
        if not tag.closing:
            if open_tag is not None:
                issues.append(
                    ParseIssue(IssueKind.MISSING_CLOSE, f"box{open_tag.index} closed at next open tag",
                               (open_tag.start, tag.start), open_tag.index)
                )
                entries.append((open_tag.index, open_tag.start, tag.start, s[open_tag.end:tag.start]))
            else:
                stray(cursor, tag.start)
            open_tag = tag
            cursor = tag.end
        else:
            if open_tag is None:
                content = s[cursor:tag.start]
                issues.append(
                    ParseIssue(IssueKind.MISSING_OPEN, f"box{tag.index} has no opening tag", (cursor, tag.end), tag.index)
                )
                entries.append((tag.index, cursor, tag.end, content))
            else:
                if tag.index != open_tag.index:
                    issues.append(
                        ParseIssue(
                            IssueKind.MALFORMED_TAG,
                            f"box{open_tag.index} closed by </box{tag.index}>",
                            (tag.start, tag.end),
                            open_tag.index,
                        )
                    )
                entries.append((open_tag.index, open_tag.start, tag.end, s[open_tag.end:tag.start]))
                open_tag = None
            cursor = tag.end
    if open_tag is not None:
        issues.append(
            ParseIssue(IssueKind.MISSING_CLOSE, f"box{open_tag.index} closed at end of input",
                       (open_tag.start, len(s)), open_tag.index)
        )
        entries.append((open_tag.index, open_tag.start, len(s), s[open_tag.end:]))
    else:
        stray(cursor, len(s))

    texts: dict[int, str] = {}
    last = -1
    out_of_order = False
    for index, a, b, raw in entries:
        if index >= n:
            issues.append(ParseIssue(IssueKind.UNKNOWN_INDEX, f"box{index} outside 0..{n - 1}", (a, b), index))
            continue
        if index in texts:
            issues.append(ParseIssue(IssueKind.DUPLICATE_INDEX, f"box{index} repeated; first kept", (a, b), index))
            continue
        if index < last:
            out_of_order = True
        last = max(last, index)
        text = unescape(raw)
        texts[index] = text if strict else text.strip()
    if out_of_order:
        issues.append(ParseIssue(IssueKind.OUT_OF_ORDER, "entries not in index order"))
    for i in range(n):
        if i not in texts:
            issues.append(ParseIssue(IssueKind.MISSING_INDEX, f"box{i} absent", None, i))

    complete = len(texts) == n
    if not issues:
        status = ParseStatus.CLEAN
    elif strict or not complete:
        status = ParseStatus.FAILED
    else:
        status = ParseStatus.REPAIRED
    return ParseResult(texts, issues, status)


def count_boxes(s: str) -> int:
    """Number of opening tags in ``s``, honoring escapes."""
    return sum(1 for t in _tokenize(s) if not t.closing)
