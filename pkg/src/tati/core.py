"""Shared data model: images, text boxes, script classes and weighted length."""

from __future__ import annotations

import base64
import enum
import hashlib
import io
import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from PIL import Image

from .errors import DegenerateBox
from .geometry import Point, segments_intersect, signed_area

# ---------------------------------------------------------------------------
# images


@dataclass(frozen=True)
class ImageDoc:
    """Opaque RGB8 image, row-major, immutable."""

    width: int
    height: int
    pixels: bytes = field(repr=False)
    source_path: str | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image must be at least 1x1, got {self.width}x{self.height}")
        if len(self.pixels) != self.width * self.height * 3:
            raise ValueError(
                f"pixel buffer has {len(self.pixels)} bytes, expected {self.width * self.height * 3}"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray, source_path: str | None = None) -> ImageDoc:
        arr = np.asarray(arr)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        return cls(arr.shape[1], arr.shape[0], arr.tobytes(), source_path)

    @classmethod
    def blank(cls, width: int, height: int, color: Sequence[int] = (255, 255, 255)) -> ImageDoc:
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:] = color
        return cls.from_array(arr)

    def array(self) -> np.ndarray:
        """Read-only (H, W, 3) uint8 view."""
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)

    def to_pil(self) -> Image.Image:
        return Image.frombytes("RGB", (self.width, self.height), self.pixels)

    @classmethod
    def from_pil(cls, im: Image.Image, source_path: str | None = None) -> ImageDoc:
        im = im.convert("RGB")
        return cls(im.width, im.height, im.tobytes(), source_path)

    def with_source(self, source_path: str | None) -> ImageDoc:
        return ImageDoc(self.width, self.height, self.pixels, source_path)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height}:".encode())
        h.update(self.pixels)
        return h.hexdigest()


def load_image(path: str | Path) -> ImageDoc:
    """Read a PNG or JPEG file. Alpha is dropped, not composited."""
    with Image.open(path) as im:
        im.load()
        if im.mode not in ("RGB", "RGBA", "L", "P", "LA", "I;16", "CMYK", "YCbCr"):
            im = im.convert("RGBA")
        return ImageDoc.from_pil(im, str(path))


def png_bytes(image: ImageDoc) -> bytes:
    buf = io.BytesIO()
    # fixed encoder settings and no ancillary chunks keep output byte-stable
    image.to_pil().save(buf, format="PNG", compress_level=6, optimize=False)
    return buf.getvalue()


def save_png(image: ImageDoc, path: str | Path) -> None:
    Path(path).write_bytes(png_bytes(image))


def image_from_bytes(data: bytes, source_path: str | None = None) -> ImageDoc:
    with Image.open(io.BytesIO(data)) as im:
        im.load()
        return ImageDoc.from_pil(im, source_path)


def image_to_b64(image: ImageDoc) -> str:
    return base64.b64encode(png_bytes(image)).decode("ascii")


def image_from_b64(data: str, source_path: str | None = None) -> ImageDoc:
    return image_from_bytes(base64.b64decode(data, validate=True), source_path)


# ---------------------------------------------------------------------------
# boxes


class Frame(NamedTuple):
    center: Point
    u_axis: Point
    v_axis: Point
    len_u: float
    len_v: float


def _as_point(p) -> Point:
    x, y = p
    x, y = float(x), float(y)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DegenerateBox(f"non-finite corner {p!r}")
    return (x, y)


@dataclass(frozen=True)
class TextBox:
    """Quadrilateral around one text line.

    Corners run clockwise (image coordinates, y down) from the top-left of
    the reading direction, so ``c0 -> c1`` is the reading axis and
    ``c0 -> c3`` the cross axis.
    """

    corners: tuple[Point, Point, Point, Point]

    def __post_init__(self):
        pts = tuple(_as_point(p) for p in self.corners)
        if len(pts) != 4:
            raise DegenerateBox(f"a box needs 4 corners, got {len(pts)}")
        object.__setattr__(self, "corners", pts)
        for i in range(4):
            a, b = pts[i], pts[(i + 1) % 4]
            if a == b:
                raise DegenerateBox(f"zero-length edge at corner {i}")
        if abs(signed_area(pts)) <= 1e-12:
            raise DegenerateBox(f"box has zero area: {pts}")
        if segments_intersect(pts[0], pts[1], pts[2], pts[3]) or segments_intersect(
            pts[1], pts[2], pts[3], pts[0]
        ):
            raise DegenerateBox(f"self-intersecting box: {pts}")

    @classmethod
    def from_rect(cls, x0: float, y0: float, x1: float, y1: float) -> TextBox:
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    @property
    def polygon(self) -> list[Point]:
        return list(self.corners)

    @property
    def area(self) -> float:
        return abs(signed_area(self.corners))

    def frame(self) -> Frame:
        return box_frame(self)

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.corners]
        ys = [p[1] for p in self.corners]
        return min(xs), min(ys), max(xs), max(ys)

    def is_axis_aligned(self, tol: float = 1e-9) -> bool:
        c = self.corners
        return all(
            abs(c[i][0] - c[(i + 1) % 4][0]) <= tol or abs(c[i][1] - c[(i + 1) % 4][1]) <= tol
            for i in range(4)
        )

    def to_json(self) -> list[list[float]]:
        return [[x, y] for x, y in self.corners]

    @classmethod
    def from_json(cls, data) -> TextBox:
        return cls(tuple(tuple(p) for p in data))


def box_frame(box: TextBox) -> Frame:
    c0, c1, c2, c3 = box.corners
    cx = (c0[0] + c1[0] + c2[0] + c3[0]) / 4.0
    cy = (c0[1] + c1[1] + c2[1] + c3[1]) / 4.0
    ux, uy = c1[0] - c0[0], c1[1] - c0[1]
    vx, vy = c3[0] - c0[0], c3[1] - c0[1]
    len_u = math.hypot(ux, uy)
    len_v = math.hypot(vx, vy)
    if len_u <= 0 or len_v <= 0 or box.area <= 0:
        raise DegenerateBox(f"degenerate frame for {box.corners}")
    return Frame((cx, cy), (ux / len_u, uy / len_u), (vx / len_v, vy / len_v), len_u, len_v)


def corners_from_frame(frame: Frame) -> tuple[Point, Point, Point, Point]:
    """Parallelogram spanned by the frame, centered on ``frame.center``."""
    (cx, cy), (ux, uy), (vx, vy), lu, lv = frame
    c0 = (cx - ux * lu / 2 - vx * lv / 2, cy - uy * lu / 2 - vy * lv / 2)
    c1 = (c0[0] + ux * lu, c0[1] + uy * lu)
    c2 = (c1[0] + vx * lv, c1[1] + vy * lv)
    c3 = (c0[0] + vx * lv, c0[1] + vy * lv)
    return (c0, c1, c2, c3)


def normalize_corners(points: Iterable) -> TextBox:
    """Put OCR corners into canonical order.

    The polygon is made clockwise, the longer pair of opposite edges is taken
    as the reading direction (ties go to the more horizontal pair), and the
    start corner is chosen so that ``c0 -> c1`` points rightwards (or
    downwards for vertical lines).
    """
    pts = [_as_point(p) for p in points]
    if len(pts) != 4:
        raise DegenerateBox(f"a box needs 4 corners, got {len(pts)}")
    if signed_area(pts) < 0:
        pts = [pts[0], pts[3], pts[2], pts[1]]

    def edge(i):
        a, b = pts[i % 4], pts[(i + 1) % 4]
        return (b[0] - a[0], b[1] - a[1])

    def elen(i):
        return math.hypot(*edge(i))

    pair_a = (elen(0) + elen(2)) / 2
    pair_b = (elen(1) + elen(3)) / 2

    def horiz(i):
        dx, dy = edge(i)
        return abs(dx) - abs(dy)

    if math.isclose(pair_a, pair_b, rel_tol=1e-9, abs_tol=1e-12):
        cand = (0, 2) if horiz(0) + horiz(2) >= horiz(1) + horiz(3) else (1, 3)
    else:
        cand = (0, 2) if pair_a > pair_b else (1, 3)
    horizontal = horiz(cand[0]) + horiz(cand[1]) >= 0
    axis = 0 if horizontal else 1

    def score(i):
        return edge(i)[axis]

    start = cand[0] if score(cand[0]) >= score(cand[1]) else cand[1]
    ordered = tuple(pts[(start + k) % 4] for k in range(4))
    return TextBox(ordered)


def clamp_box(box: TextBox, width: float, height: float) -> TextBox:
    """Clamp every corner into the image rectangle."""
    return TextBox(
        tuple((min(max(x, 0.0), float(width)), min(max(y, 0.0), float(height))) for x, y in box.corners)
    )


def box_inside(box: TextBox, width: float, height: float, tol: float = 1e-9) -> bool:
    return all(-tol <= x <= width + tol and -tol <= y <= height + tol for x, y in box.corners)


# ---------------------------------------------------------------------------
# recognized text


@dataclass(frozen=True)
class RecognizedLine:
    box: TextBox
    text: str
    confidence: float = 1.0
    order: int = 0

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError("recognized text must be nonempty after trimming")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.order < 0:
            raise ValueError(f"negative order {self.order}")

    def with_order(self, order: int) -> RecognizedLine:
        return RecognizedLine(self.box, self.text, self.confidence, order)

    def to_json(self) -> dict:
        return {
            "box": self.box.to_json(),
            "text": self.text,
            "confidence": self.confidence,
            "order": self.order,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> RecognizedLine:
        return cls(
            TextBox.from_json(data["box"]),
            data["text"],
            float(data.get("confidence", 1.0)),
            int(data.get("order", 0)),
        )


# ---------------------------------------------------------------------------
# scripts and weighted length


class ScriptClass(str, enum.Enum):
    CJK = "CJK"
    LATIN = "LATIN"
    HANGUL = "HANGUL"
    KANA = "KANA"
    DIGIT = "DIGIT"
    SPACE = "SPACE"
    OTHER = "OTHER"


_CJK_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2EBEF),
    (0x2F800, 0x2FA1F),
    (0x30000, 0x323AF),
)
_HANGUL_RANGES = (
    (0x1100, 0x11FF),
    (0x3130, 0x318F),
    (0xA960, 0xA97F),
    (0xAC00, 0xD7A3),
    (0xD7B0, 0xD7FF),
)
_KANA_RANGES = (
    (0x3040, 0x309F),
    (0x30A0, 0x30FF),
    (0x31F0, 0x31FF),
    (0x1B000, 0x1B16F),
)


def _in(cp: int, ranges) -> bool:
    return any(lo <= cp <= hi for lo, hi in ranges)


def classify_script(ch: str) -> ScriptClass:
    if len(ch) != 1:
        raise TypeError(f"expected a single character, got {ch!r}")
    cp = ord(ch)
    if ch.isspace():
        return ScriptClass.SPACE
    if cp < 0x80:
        if ch.isalpha():
            return ScriptClass.LATIN
        if ch.isdigit():
            return ScriptClass.DIGIT
        return ScriptClass.OTHER
    if _in(cp, _CJK_RANGES):
        return ScriptClass.CJK
    if _in(cp, _HANGUL_RANGES):
        return ScriptClass.HANGUL
    if _in(cp, _KANA_RANGES):
        return ScriptClass.KANA
    return ScriptClass.OTHER


def text_scripts(text: str) -> set[ScriptClass]:
    """Scripts a renderer must support to draw ``text``.

    Punctuation, symbols, marks and separators are script-neutral, and
    non-ASCII Latin letters count as LATIN.
    """
    out: set[ScriptClass] = set()
    for ch in text:
        cls = classify_script(ch)
        if cls is ScriptClass.OTHER:
            cat = unicodedata.category(ch)
            if cat[0] in "PSZMC":
                continue
            if cat[0] == "N":
                out.add(ScriptClass.DIGIT)
                continue
            if unicodedata.name(ch, "").startswith("LATIN"):
                out.add(ScriptClass.LATIN)
                continue
        out.add(cls)
    return out


@dataclass(frozen=True)
class WeightTable:
    """Display width per script class, in units of one Latin letter."""

    weights: Mapping[ScriptClass, float]

    def __post_init__(self):
        w = {ScriptClass(k): float(v) for k, v in dict(self.weights).items()}
        missing = set(ScriptClass) - set(w)
        if missing:
            raise ValueError(f"weight table lacks {sorted(m.value for m in missing)}")
        for k, v in w.items():
            if not math.isfinite(v) or v < 0 or (v == 0 and k is not ScriptClass.SPACE):
                raise ValueError(f"bad weight {v} for {k.value}")
        object.__setattr__(self, "weights", w)

    def __getitem__(self, cls: ScriptClass) -> float:
        return self.weights[cls]

    def __hash__(self):
        return hash(tuple(sorted((k.value, v) for k, v in self.weights.items())))

    def with_overrides(self, **overrides: float) -> WeightTable:
        w = dict(self.weights)
        for k, v in overrides.items():
            w[ScriptClass(k.upper())] = v
        return WeightTable(w)

    def to_json(self) -> dict[str, float]:
        return {k.value: v for k, v in sorted(self.weights.items(), key=lambda kv: kv[0].value)}


DEFAULT_WEIGHTS = WeightTable(
    {
        ScriptClass.LATIN: 1.0,
        ScriptClass.DIGIT: 1.0,
        ScriptClass.SPACE: 0.5,
        ScriptClass.CJK: 2.5,
        ScriptClass.HANGUL: 2.5,
        ScriptClass.KANA: 2.5,
        ScriptClass.OTHER: 1.0,
    }
)


def weighted_length(text: str, weights: WeightTable = DEFAULT_WEIGHTS) -> float:
    return float(sum(weights[classify_script(ch)] for ch in text))
