"""OCR gateway: fetch recognized lines from a backend and fix reading order."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .core import ImageDoc, RecognizedLine, box_inside, clamp_box, image_to_b64, normalize_corners
from .errors import BackendMalformed, BackendUnreachable, BadAnnotation, DegenerateBox
from .wire import post_json

log = logging.getLogger(__name__)

BAND_FACTOR = 0.6


class OcrKind(str, enum.Enum):
    REMOTE = "remote"
    MOCK = "mock"


class MockFallback(str, enum.Enum):
    EMPTY = "empty"
    ERROR = "error"


@dataclass
class MockOcr:
    """Scripted OCR answers keyed by image id.

    An image is looked up by the explicit ``image_id`` passed to
    :func:`run_ocr`, then by the file name and stem of its ``source_path``,
    then by its content digest.
    """

    script: Mapping[str, Sequence[RecognizedLine]] = field(default_factory=dict)
    fallback: MockFallback = MockFallback.EMPTY

    def lookup(self, image: ImageDoc, image_id: str | None = None):
        keys = []
        if image_id is not None:
            keys.append(image_id)
        if image.source_path:
            p = Path(image.source_path)
            keys += [p.name, p.stem]
        keys.append(image.digest())
        for k in keys:
            if k in self.script:
                return [_line_payload(line) for line in self.script[k]]
        if self.fallback is MockFallback.ERROR:
            raise BackendUnreachable(f"mock OCR has no script for {keys[0]!r}", keys)
        return []

    @classmethod
    def from_json(cls, data: Mapping) -> MockOcr:
        """``{"fallback": "empty", "images": {id: [{"box", "text", "confidence"}]}}``."""
        images = data.get("images", {})
        script = {
            k: [RecognizedLine.from_json({**ln, "order": 0}) for ln in v] for k, v in images.items()
        }
        return cls(script, MockFallback(data.get("fallback", "empty")))

    @classmethod
    def load(cls, path: str | Path) -> MockOcr:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _line_payload(line: RecognizedLine) -> dict:
    return {"box": line.box.to_json(), "text": line.text, "confidence": line.confidence}


@dataclass
class OcrBackendRef:
    kind: OcrKind = OcrKind.MOCK
    endpoint: str | None = None
    timeout: float = 30.0
    mock: MockOcr | None = None

    def __post_init__(self):
        self.kind = OcrKind(self.kind)
        if self.kind is OcrKind.REMOTE and not self.endpoint:
            raise ValueError("remote OCR backend needs an endpoint")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.kind is OcrKind.MOCK and self.mock is None:
            self.mock = MockOcr()


def _validate_payload(payload) -> list[dict]:
    if not isinstance(payload, dict) or not isinstance(payload.get("lines"), list):
        raise BackendMalformed("OCR reply lacks a 'lines' list", payload)
    out = []
    for i, item in enumerate(payload["lines"]):
        if not isinstance(item, dict):
            raise BackendMalformed(f"line {i} is not an object", payload)
        box = item.get("box")
        text = item.get("text")
        conf = item.get("confidence", 1.0)
        if (
            not isinstance(box, list)
            or len(box) != 4
            or not all(isinstance(p, list) and len(p) == 2 and all(isinstance(c, (int, float)) for c in p) for p in box)
        ):
            raise BackendMalformed(f"line {i} has a malformed box", payload)
        if not isinstance(text, str):
            raise BackendMalformed(f"line {i} has no text", payload)
        if not isinstance(conf, (int, float)) or isinstance(conf, bool):
            raise BackendMalformed(f"line {i} has a non-numeric confidence", payload)
        out.append({"box": box, "text": text, "confidence": float(conf)})
    return out


def run_ocr(image: ImageDoc, backend: OcrBackendRef, image_id: str | None = None) -> list[RecognizedLine]:
    """Recognize text lines, clamp their boxes into the image and order them."""
    if backend.kind is OcrKind.MOCK:
        payload = {"lines": backend.mock.lookup(image, image_id)}
    else:
        payload = post_json(backend.endpoint, "ocr", {"image_b64": image_to_b64(image)}, backend.timeout)
    items = _validate_payload(payload)

    lines = []
    for i, item in enumerate(items):
        text = item["text"].strip()
        if not text:
            log.warning("dropping OCR line %d: empty text", i)
            continue
        try:
            box = normalize_corners(item["box"])
        except DegenerateBox as exc:
            raise BackendMalformed(f"line {i}: {exc}", payload) from exc
        if not box_inside(box, image.width, image.height):
            try:
                clamped = clamp_box(box, image.width, image.height)
            except DegenerateBox:
                log.warning("dropping OCR line %d: box lies outside the image", i)
                continue
            log.warning("clamped OCR box %d from %s to %s", i, box.to_json(), clamped.to_json())
            box = clamped
        conf = min(max(item["confidence"], 0.0), 1.0)
        lines.append(RecognizedLine(box, text, conf, 0))
    return order_lines(lines)


def order_lines(lines: Sequence[RecognizedLine], annotated_order: Sequence[int] | None = None) -> list[RecognizedLine]:
    """Assign reading order 0..n-1.

    ``annotated_order[i]`` is the position of input line ``i``. Without an
    annotation, lines are grouped into horizontal bands (vertical center
    distance below 0.6 of the smaller line height, chained), bands run top
    to bottom and lines within a band left to right.
    """
    n = len(lines)
    if annotated_order is not None:
        ann = list(annotated_order)
        if len(ann) != n or sorted(ann) != list(range(n)):
            raise BadAnnotation(f"annotation {ann} is not a permutation of 0..{n - 1}")
        out: list[RecognizedLine | None] = [None] * n
        for line, pos in zip(lines, ann):
            out[pos] = line.with_order(pos)
        return out  # type: ignore[return-value]

    frames = [ln.box.frame() for ln in lines]
    idx = sorted(range(n), key=lambda i: (frames[i].center[1], frames[i].center[0]))
    bands: list[list[int]] = []
    for i in idx:
        cy, hv = frames[i].center[1], frames[i].len_v
        if bands and any(
            abs(cy - frames[j].center[1]) < BAND_FACTOR * min(hv, frames[j].len_v) for j in bands[-1]
        ):
            bands[-1].append(i)
        else:
            bands.append([i])
    ordered = [i for band in bands for i in sorted(band, key=lambda j: frames[j].center[0])]
    if n > 1:
        log.info("no order annotation; band rule ordered %d lines into %d bands", n, len(bands))
    return [lines[i].with_order(k) for k, i in enumerate(ordered)]
