"""Anticipated target boxes: length ratio, resize, deconfliction, splitting."""

from __future__ import annotations

import enum
import json
import logging
import math
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .core import (
    DEFAULT_WEIGHTS,
    ImageDoc,
    RecognizedLine,
    ScriptClass,
    TextBox,
    WeightTable,
    box_frame,
    box_inside,
    classify_script,
    text_scripts,
    weighted_length,
)
from .errors import BadRatio, DegenerateBox, EmptySource, UnsplittableUnit
from .geometry import clip_convex, intersection_area, rect_polygon, signed_area

log = logging.getLogger(__name__)

DEFAULT_MAX_UNITS = 20.0
_AREA_EPS = 1e-9


class ResizeAxis(str, enum.Enum):
    READING = "reading"
    CROSS = "cross"
    AUTO = "auto"


@dataclass(frozen=True)
class ResizePolicy:
    hi_threshold: float = 1.2
    lo_threshold: float = 0.8
    clamp_min: float = 0.5
    clamp_max: float = 2.0
    axis: ResizeAxis = ResizeAxis.AUTO
    enabled: bool = True
    word_count: bool = False  # literal word-count ratio instead of weighted length

    def __post_init__(self):
        object.__setattr__(self, "axis", ResizeAxis(self.axis))
        if not (0 < self.lo_threshold <= 1 <= self.hi_threshold):
            raise ValueError("need 0 < lo_threshold <= 1 <= hi_threshold")
        if not (0 < self.clamp_min <= 1 <= self.clamp_max):
            raise ValueError("need 0 < clamp_min <= 1 <= clamp_max")

    def to_json(self) -> dict:
        return {
            "hi_threshold": self.hi_threshold,
            "lo_threshold": self.lo_threshold,
            "clamp_min": self.clamp_min,
            "clamp_max": self.clamp_max,
            "axis": self.axis.value,
            "enabled": self.enabled,
            "word_count": self.word_count,
        }


def word_count(text: str) -> int:
    return len(text.split())


def length_ratio(src: str, tgt: str, weights: WeightTable = DEFAULT_WEIGHTS, words: bool = False) -> float:
    """Target length over source length, by weighted display width or by words."""
    measure = word_count if words else (lambda s: weighted_length(s, weights))
    denom = measure(src)
    if not src or denom <= 0:
        raise EmptySource(f"source {src!r} has no measurable length")
    if not tgt:
        return 0.0
    return measure(tgt) / denom


# ---------------------------------------------------------------------------
# box geometry in the box's own (possibly oblique) frame


def _oblique(box: TextBox):
    fr = box_frame(box)
    (cx, cy), (ux, uy), (vx, vy) = fr.center, fr.u_axis, fr.v_axis
    det = ux * vy - uy * vx
    if abs(det) < 1e-15:
        raise DegenerateBox("box axes are parallel")
    coords = []
    for px, py in box.corners:
        dx, dy = px - cx, py - cy
        a = (dx * vy - dy * vx) / det
        b = (ux * dy - uy * dx) / det
        coords.append((a, b))
    return fr, coords


def _rebuild(fr, coords) -> TextBox:
    (cx, cy), (ux, uy), (vx, vy) = fr.center, fr.u_axis, fr.v_axis
    return TextBox(tuple((cx + a * ux + b * vx, cy + a * uy + b * vy) for a, b in coords))


def resize_box(box: TextBox, ratio: float, policy: ResizePolicy = ResizePolicy()) -> TextBox:
    """Scale the box about its center when ``ratio`` leaves the dead zone.

    Inside ``[lo_threshold, hi_threshold]`` (or with the policy disabled)
    the very same box is returned. Otherwise the chosen axis is scaled by
    ``clamp(ratio, clamp_min, clamp_max)`` and the other axis is kept.
    """
    if not (ratio > 0) or not math.isfinite(ratio):
        raise BadRatio(f"ratio must be a positive number, got {ratio}")
    if not policy.enabled or policy.lo_threshold <= ratio <= policy.hi_threshold:
        return box
    f = min(max(ratio, policy.clamp_min), policy.clamp_max)
    fr, coords = _oblique(box)
    if policy.axis is ResizeAxis.CROSS:
        coords = [(a, b * f) for a, b in coords]
    else:
        coords = [(a * f, b) for a, b in coords]
    return _rebuild(fr, coords)


def _shrink_side(box: TextBox, axis: int, side: float, t: float) -> TextBox:
    """Pull the edge facing ``side`` (+1/-1) along frame ``axis`` inward by ``t``."""
    if t <= 0:
        return box
    fr, coords = _oblique(box)
    out = []
    for a, b in coords:
        c = [a, b]
        if c[axis] * side > 0:
            c[axis] -= side * t
        out.append((c[0], c[1]))
    return _rebuild(fr, out)


def _overlap(a: TextBox, b: TextBox) -> float:
    return intersection_area(a.corners, b.corners)


def _axis_len(box: TextBox, axis: int) -> float:
    fr = box_frame(box)
    return fr.len_u if axis == 0 else fr.len_v


def _grown_axis(box: TextBox, orig: TextBox) -> int | None:
    fb, fo = box_frame(box), box_frame(orig)
    if fb.len_u > fo.len_u + 1e-9:
        return 0
    if fb.len_v > fo.len_v + 1e-9:
        return 1
    return None


def _shrink_against(box: TextBox, orig: TextBox, other: TextBox, allowed: float) -> TextBox:
    axis = _grown_axis(box, orig)
    if axis is None:
        return box
    fr = box_frame(box)
    fo = box_frame(other)
    direction = fr.u_axis if axis == 0 else fr.v_axis
    dx, dy = fo.center[0] - fr.center[0], fo.center[1] - fr.center[1]
    side = 1.0 if dx * direction[0] + dy * direction[1] >= 0 else -1.0
    t_max = _axis_len(box, axis) - _axis_len(orig, axis)
    if _overlap(_shrink_side(box, axis, side, t_max), other) > allowed + _AREA_EPS:
        return _shrink_side(box, axis, side, t_max)
    lo, hi = 0.0, t_max
    for _ in range(60):
        mid = (lo + hi) / 2
        if _overlap(_shrink_side(box, axis, side, mid), other) > allowed + _AREA_EPS:
            lo = mid
        else:
            hi = mid
    return _shrink_side(box, axis, side, hi)


def _trim_to_original(box: TextBox, orig: TextBox) -> TextBox:
    """Cut the box back to the original's extent along both frame axes."""
    for axis in (0, 1):
        fr, coords = _oblique(box)
        (cx, cy), (ux, uy), (vx, vy) = fr.center, fr.u_axis, fr.v_axis
        det = ux * vy - uy * vx
        proj = []
        for px, py in orig.corners:
            dx, dy = px - cx, py - cy
            proj.append((dx * vy - dy * vx) / det if axis == 0 else (ux * dy - uy * dx) / det)
        lo = min(c[axis] for c in coords)
        hi = max(c[axis] for c in coords)
        box = _shrink_side(box, axis, 1.0, max(0.0, hi - max(proj)))
        box = _shrink_side(box, axis, -1.0, max(0.0, min(proj) - lo))
    return box


def clip_to_image(box: TextBox, width: int, height: int) -> TextBox:
    """Fit a box inside the image without ever enlarging it.

    Axis-aligned boxes are intersected with the image rectangle. Rotated
    boxes are scaled down about a point of their visible part until every
    corner is inside.
    """
    if box_inside(box, width, height, tol=0.0):
        return box
    if box.is_axis_aligned():
        x0, y0, x1, y1 = box.bounds()
        cx0, cy0 = max(x0, 0.0), max(y0, 0.0)
        cx1, cy1 = min(x1, float(width)), min(y1, float(height))
        if cx1 <= cx0 or cy1 <= cy0:
            log.warning("box %s lies outside the image; left unclipped", box.to_json())
            return box
        return TextBox(
            tuple((min(max(x, cx0), cx1), min(max(y, cy0), cy1)) for x, y in box.corners)
        )
    visible = clip_convex(box.corners, rect_polygon(width, height))
    if len(visible) < 3 or abs(signed_area(visible)) <= _AREA_EPS:
        log.warning("box %s lies outside the image; left unclipped", box.to_json())
        return box
    ax = sum(p[0] for p in visible) / len(visible)
    ay = sum(p[1] for p in visible) / len(visible)
    s = 1.0
    for x, y in box.corners:
        for c, a, hi in ((x, ax, width), (y, ay, height)):
            d = c - a
            if d > 0 and a + d > hi:
                s = min(s, (hi - a) / d)
            elif d < 0 and a + d < 0:
                s = min(s, (0 - a) / d)
    s = max(0.0, s) * (1 - 1e-12)
    return TextBox(tuple((ax + s * (x - ax), ay + s * (y - ay)) for x, y in box.corners))


def deconflict(
    boxes: Sequence[TextBox],
    image: ImageDoc,
    originals: Sequence[TextBox] | None = None,
) -> list[TextBox]:
    """Undo resize growth that collides with a neighbor, then clip to the image.

    ``originals`` are the pre-resize boxes; a box is only ever shrunk back
    toward its original size, one-sidedly, on the side facing the neighbor.
    """
    out = list(boxes)
    if originals is not None:
        if len(originals) != len(out):
            raise ValueError("originals must align with boxes")
        n = len(out)
        for i in range(n):
            for j in range(i + 1, n):
                allowed = _overlap(originals[i], originals[j])
                if _overlap(out[i], out[j]) <= allowed + _AREA_EPS:
                    continue
                out[i] = _shrink_against(out[i], originals[i], out[j], allowed)
                if _overlap(out[i], out[j]) > allowed + _AREA_EPS:
                    out[j] = _shrink_against(out[j], originals[j], out[i], allowed)
                # growth on both sides of the neighbor: fall back to the original extents
                for k in (i, j):
                    if _overlap(out[i], out[j]) > allowed + _AREA_EPS:
                        out[k] = _trim_to_original(out[k], originals[k])
    return [clip_to_image(b, image.width, image.height) for b in out]


# ---------------------------------------------------------------------------
# splitting


def _breaks_after(ch: str) -> bool:
    return unicodedata.category(ch)[0] == "P"


def _standalone(ch: str) -> bool:
    return classify_script(ch) in (ScriptClass.CJK, ScriptClass.KANA)


def _atoms(text: str) -> list[tuple[str, bool]]:
    """Unbreakable pieces of normalized text, each flagged if a space precedes it."""
    atoms: list[tuple[str, bool]] = []
    for wi, word in enumerate(text.split()):
        cur = ""
        first = True
        for ch in word:
            if cur and (_standalone(ch) or _standalone(cur[-1]) or _breaks_after(cur[-1])):
                atoms.append((cur, wi > 0 and first))
                first = False
                cur = ""
            cur += ch
        if cur:
            atoms.append((cur, wi > 0 and first))
    return atoms


def split_text(text: str, max_units: float = DEFAULT_MAX_UNITS, weights: WeightTable = DEFAULT_WEIGHTS) -> list[str]:
    """Greedy line breaking so every part fits ``max_units`` weighted units.

    Breaks prefer whitespace, then CJK/kana character boundaries and
    punctuation; a word longer than the cap is hard-split by character.
    Whitespace at a break is dropped, inner whitespace is normalized to
    single spaces.
    """
    if max_units <= 0:
        raise ValueError("max_units must be > 0")
    for ch in text:
        if not ch.isspace() and weights[classify_script(ch)] > max_units:
            raise UnsplittableUnit(f"{ch!r} alone exceeds {max_units} units")
    parts: list[str] = []
    cur = ""
    for atom, spaced in _atoms(text):
        joined = (cur + " " + atom) if (cur and spaced) else (cur + atom)
        if weighted_length(joined, weights) <= max_units:
            cur = joined
            continue
        if cur:
            parts.append(cur)
            cur = ""
        if weighted_length(atom, weights) <= max_units:
            cur = atom
            continue
        for ch in atom:
            if weighted_length(cur + ch, weights) > max_units:
                parts.append(cur)
                cur = ""
            cur += ch
    if cur:
        parts.append(cur)
    return parts


# ---------------------------------------------------------------------------
# plans


class Route(str, enum.Enum):
    DIFFUSION = "DIFFUSION"
    FALLBACK = "FALLBACK"
    SKIP = "SKIP"


@dataclass
class PlanEntry:
    source_line: RecognizedLine
    target_text: str
    target_box: TextBox
    lines_split: list[str]
    route: Route
    style: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "source_line": self.source_line.to_json(),
            "target_text": self.target_text,
            "target_box": self.target_box.to_json(),
            "lines_split": list(self.lines_split),
            "route": self.route.value,
        }
        if self.style:
            out["style"] = self.style
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> PlanEntry:
        return cls(
            RecognizedLine.from_json(data["source_line"]),
            data["target_text"],
            TextBox.from_json(data["target_box"]),
            list(data["lines_split"]),
            Route(data["route"]),
            dict(data.get("style", {})),
        )


@dataclass
class FusionPlan:
    entries: list[PlanEntry] = field(default_factory=list)
    max_units: float = DEFAULT_MAX_UNITS

    def to_json(self) -> dict:
        return {"max_units": self.max_units, "entries": [e.to_json() for e in self.entries]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, data: Mapping) -> FusionPlan:
        return cls([PlanEntry.from_json(e) for e in data.get("entries", [])], float(data.get("max_units", DEFAULT_MAX_UNITS)))

    @classmethod
    def loads(cls, text: str) -> FusionPlan:
        return cls.from_json(json.loads(text))

    def check(self, weights: WeightTable = DEFAULT_WEIGHTS, image: ImageDoc | None = None) -> list[str]:
        """List violated plan invariants; empty when the plan is sound."""
        problems = []
        for k, e in enumerate(self.entries):
            if (e.route is Route.SKIP) != (not e.target_text):
                problems.append(f"entry {k}: SKIP must coincide with empty target text")
            for part in e.lines_split:
                if weighted_length(part, weights) > self.max_units + 1e-9:
                    problems.append(f"entry {k}: line {part!r} exceeds {self.max_units} units")
            if image is not None and not box_inside(e.target_box, image.width, image.height, tol=1e-6):
                problems.append(f"entry {k}: target box leaves the image")
        return problems


def choose_route(
    text: str,
    parts: Sequence[str],
    diffusion_scripts: Iterable[ScriptClass] | None,
    max_units: float,
    weights: WeightTable = DEFAULT_WEIGHTS,
) -> Route:
    if not text:
        return Route.SKIP
    if diffusion_scripts is None:
        return Route.FALLBACK
    allowed = set(diffusion_scripts)
    if not text_scripts(text) <= allowed:
        return Route.FALLBACK
    if any(weighted_length(p, weights) > max_units for p in parts):
        return Route.FALLBACK
    return Route.DIFFUSION


def build_plan(
    lines: Sequence[RecognizedLine],
    texts: Mapping[int, str],
    image: ImageDoc,
    policy: ResizePolicy = ResizePolicy(),
    weights: WeightTable = DEFAULT_WEIGHTS,
    max_units: float = DEFAULT_MAX_UNITS,
    diffusion_scripts: Iterable[ScriptClass] | None = None,
    styles: Sequence[dict] | None = None,
) -> FusionPlan:
    """Ratio test, resize, deconflict and split for every line.

    ``texts`` is keyed by each line's ``order``. Pass
    ``diffusion_scripts`` when a diffusion renderer is configured; without
    it every drawable entry is routed to the fallback rasterizer.
    """
    originals = [ln.box for ln in lines]
    resized = []
    for ln in lines:
        tgt = texts.get(ln.order, "")
        if not tgt:
            resized.append(ln.box)
            continue
        ratio = length_ratio(ln.text, tgt, weights, words=policy.word_count)
        if ratio <= 0:
            resized.append(ln.box)
            continue
        resized.append(resize_box(ln.box, ratio, policy))
    targets = deconflict(resized, image, originals)
    scripts = None if diffusion_scripts is None else set(diffusion_scripts)
    entries = []
    for k, ln in enumerate(lines):
        tgt = texts.get(ln.order, "")
        parts = split_text(tgt, max_units, weights) if tgt else []
        route = choose_route(tgt, parts, scripts, max_units, weights)
        style = dict(styles[k]) if styles is not None else {}
        entries.append(PlanEntry(ln, tgt, targets[k], parts, route, style))
    return FusionPlan(entries, max_units)
