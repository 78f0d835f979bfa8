"""Erase source text and draw target text back into the image."""

from __future__ import annotations

import enum
import functools
import io
import logging
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .core import ImageDoc, ScriptClass, TextBox, box_frame, box_inside, image_from_b64, image_to_b64, text_scripts
from .errors import BackendError, BackendMalformed, UnrenderableScript
from .geometry import dilate, polygon_mask
from .layout import DEFAULT_MAX_UNITS, FusionPlan, Route
from .wire import post_json

log = logging.getLogger(__name__)

FONT_FILE = "TatiFallback-Regular.woff2"
LINE_SPACING = 1.2
FILL_WIDTH = 0.9
MAX_RASTER_SIZE = 400
DEFAULT_RENDERABLE = frozenset(
    {ScriptClass.CJK, ScriptClass.LATIN, ScriptClass.HANGUL, ScriptClass.KANA, ScriptClass.DIGIT, ScriptClass.SPACE}
)


class EraseMethod(str, enum.Enum):
    REMOTE_STROKE = "REMOTE_STROKE"
    SOLID_FILL = "SOLID_FILL"


@dataclass
class ErasureRequest:
    image: ImageDoc
    regions: list[TextBox]
    method: EraseMethod = EraseMethod.SOLID_FILL

    def __post_init__(self):
        self.method = EraseMethod(self.method)
        for k, r in enumerate(self.regions):
            if not box_inside(r, self.image.width, self.image.height, tol=1e-6):
                raise ValueError(f"region {k} leaves the {self.image.width}x{self.image.height} image")


@dataclass
class EraserBackendRef:
    method: EraseMethod = EraseMethod.SOLID_FILL
    endpoint: str | None = None
    timeout: float = 60.0
    erase_fallback: bool = False  # fall back to SOLID_FILL when the remote eraser fails

    def __post_init__(self):
        self.method = EraseMethod(self.method)
        if self.method is EraseMethod.REMOTE_STROKE and not self.endpoint:
            raise ValueError("REMOTE_STROKE eraser needs an endpoint")


class RenderKind(str, enum.Enum):
    REMOTE_DIFFUSION = "REMOTE_DIFFUSION"
    FALLBACK_RASTER = "FALLBACK_RASTER"


@dataclass
class RenderBackendRef:
    kind: RenderKind = RenderKind.FALLBACK_RASTER
    endpoint: str | None = None
    max_units: float = DEFAULT_MAX_UNITS
    renderable_scripts: frozenset = DEFAULT_RENDERABLE
    timeout: float = 120.0
    reroute_unrenderable: bool = False

    def __post_init__(self):
        self.kind = RenderKind(self.kind)
        self.renderable_scripts = frozenset(ScriptClass(s) for s in self.renderable_scripts)
        if self.kind is RenderKind.REMOTE_DIFFUSION and not self.endpoint:
            raise ValueError("REMOTE_DIFFUSION renderer needs an endpoint")
        if self.max_units <= 0:
            raise ValueError("max_units must be > 0")

    @property
    def diffusion_scripts(self) -> frozenset | None:
        """Scripts the plan may route to diffusion, None for raster-only."""
        return self.renderable_scripts if self.kind is RenderKind.REMOTE_DIFFUSION else None


# ---------------------------------------------------------------------------
# erasure


def region_masks(image: ImageDoc, regions: Iterable[TextBox]) -> list[np.ndarray]:
    return [polygon_mask(r.corners, image.width, image.height) for r in regions]


def union_mask(image: ImageDoc, regions: Iterable[TextBox]) -> np.ndarray:
    out = np.zeros((image.height, image.width), dtype=bool)
    for m in region_masks(image, regions):
        out |= m
    return out


def lower_median(values: np.ndarray) -> np.ndarray:
    """Per-channel lower median of an (N, 3) array; always an actual sample value."""
    s = np.sort(values, axis=0)
    return s[(len(s) - 1) // 2]


def border_color(arr: np.ndarray, mask: np.ndarray, exclude: np.ndarray) -> np.ndarray:
    """Median color of the 1px ring around ``mask``, ignoring ``exclude`` pixels."""
    ring = dilate(mask, 1) & ~mask & ~exclude
    samples = arr[ring] if ring.any() else arr[mask]
    if len(samples) == 0:
        return np.zeros(3, dtype=np.uint8)
    return lower_median(samples)


def _solid_fill(image: ImageDoc, regions: Sequence[TextBox]) -> ImageDoc:
    arr = image.array()
    masks = region_masks(image, regions)
    union = np.zeros(arr.shape[:2], dtype=bool)
    for m in masks:
        union |= m
    out = arr.copy()
    for m in masks:
        out[m] = border_color(arr, m, union)
    return ImageDoc.from_array(out, image.source_path)


def composite(base: ImageDoc, patch: ImageDoc, mask: np.ndarray) -> ImageDoc:
    """Take ``patch`` pixels inside ``mask`` and ``base`` pixels elsewhere."""
    if (patch.width, patch.height) != (base.width, base.height):
        raise BackendMalformed(
            f"backend returned a {patch.width}x{patch.height} image for a {base.width}x{base.height} input"
        )
    out = base.array().copy()
    out[mask] = patch.array()[mask]
    return ImageDoc.from_array(out, base.source_path)


def erase_regions(req: ErasureRequest, backend: EraserBackendRef | None = None) -> ImageDoc:
    """Remove text inside the regions; pixels outside them are never touched."""
    if not req.regions:
        return req.image
    if req.method is EraseMethod.SOLID_FILL:
        return _solid_fill(req.image, req.regions)
    if backend is None or not backend.endpoint:
        raise ValueError("REMOTE_STROKE erasure needs a backend with an endpoint")
    payload = {"image_b64": image_to_b64(req.image), "regions": [r.to_json() for r in req.regions]}
    try:
        reply = post_json(backend.endpoint, "erase", payload, backend.timeout)
        if not isinstance(reply, dict) or not isinstance(reply.get("image_b64"), str):
            raise BackendMalformed("erase reply lacks 'image_b64'", reply)
        patch = _decode(reply["image_b64"])
        return composite(req.image, patch, union_mask(req.image, req.regions))
    except BackendError as exc:
        if not backend.erase_fallback:
            raise
        log.warning("remote erase failed (%s); using solid fill", exc)
        return _solid_fill(req.image, req.regions)


def _decode(b64: str) -> ImageDoc:
    try:
        return image_from_b64(b64)
    except Exception as exc:  # PIL raises a zoo of types for bad data
        raise BackendMalformed(f"undecodable image from backend: {exc}") from exc


# ---------------------------------------------------------------------------
# style hints


def estimate_style(image: ImageDoc, box: TextBox, exclude: np.ndarray | None = None, min_share: float = 0.02) -> dict:
    """Guess the text color inside ``box`` of the original image.

    Pixels far from the surrounding background color are taken as ink; the
    median of the most distant ones becomes the hint. Returns ``{}`` when there is too little ink.
    """
    arr = image.array()
    mask = polygon_mask(box.corners, image.width, image.height)
    if not mask.any():
        return {}
    bg = border_color(arr, mask, exclude if exclude is not None else mask)
    px = arr[mask].astype(np.int16)
    dist = np.abs(px - bg.astype(np.int16)).max(axis=1)
    if (dist > 64).sum() < max(1, min_share * len(px)):
        return {}
    # antialiased edges sit between ink and background; keep the core strokes
    core = dist >= 0.8 * dist.max()
    return {"color": [int(c) for c in lower_median(px[core].astype(np.uint8))]}


def contrast_color(image: ImageDoc, mask: np.ndarray) -> tuple[int, int, int]:
    px = image.array()[mask]
    if len(px) == 0:
        return (0, 0, 0)
    luma = float((px.astype(np.float64) @ np.array([0.299, 0.587, 0.114])).mean())
    return (0, 0, 0) if luma >= 128 else (255, 255, 255)


# ---------------------------------------------------------------------------
# fallback rasterizer


@functools.lru_cache(maxsize=1)
def font_bytes() -> bytes:
    return resources.files("tati").joinpath("data", "fonts", FONT_FILE).read_bytes()


@functools.lru_cache(maxsize=64)
def load_font(size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(io.BytesIO(font_bytes()), size)


def layout_size(len_v: float, n_lines: int) -> int:
    """Integer pixel size so ``n_lines`` lines fit the box height."""
    return max(1, int(len_v / (n_lines * LINE_SPACING)))


def rasterize_lines(lines: Sequence[str], size: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Draw centered lines into an 8-bit coverage canvas.

    Returns the canvas and the ``(first, last + 1)`` span of inked columns
    (``(0, width)`` when nothing inked).
    """
    font = load_font(size)
    ascent, descent = font.getmetrics()
    line_h = max(1, round(size * LINE_SPACING))
    boxes = [font.getbbox(t, anchor="ls") for t in lines]
    widths = [b[2] - b[0] for b in boxes]
    pad = 2
    w = max(max(widths, default=0), 1) + 2 * pad
    h = line_h * len(lines) + 2 * pad
    canvas = Image.new("L", (w, h), 0)
    draw = ImageDraw.Draw(canvas)
    for k, (text, b, tw) in enumerate(zip(lines, boxes, widths)):
        x = pad + (w - 2 * pad - tw) // 2 - b[0]
        baseline = pad + k * line_h + (line_h - (ascent + descent)) // 2 + ascent
        draw.text((x, baseline), text, font=font, fill=255, anchor="ls")
    cov = np.asarray(canvas)
    cols = np.flatnonzero(cov.any(axis=0))
    span = (int(cols[0]), int(cols[-1]) + 1) if len(cols) else (0, w)
    return cov, span


def _bilinear(cov: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = cov.shape
    src = np.pad(cov.astype(np.float64) / 255.0, 1)
    xs = np.clip(xs - 0.5 + 1, 0, w + 1)
    ys = np.clip(ys - 0.5 + 1, 0, h + 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h)
    fx, fy = xs - x0, ys - y0
    top = src[y0, x0] * (1 - fx) + src[y0, x0 + 1] * fx
    bot = src[y0 + 1, x0] * (1 - fx) + src[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def draw_text_box(image: ImageDoc, box: TextBox, lines: Sequence[str], color: Sequence[int] | None = None) -> ImageDoc:
    """Rasterize ``lines`` into ``box`` with the bundled font.

    Font size follows the box height; lines are then scaled along the
    reading axis so the widest line's ink spans 90% of the box length.
    Only pixels inside ``box`` change.
    """
    lines = [t for t in lines if t.strip()]
    if not lines:
        return image
    mask = polygon_mask(box.corners, image.width, image.height)
    if not mask.any():
        return image
    fr = box_frame(box)
    size = layout_size(fr.len_v, len(lines))
    target_w = FILL_WIDTH * fr.len_u
    cov, (c0, c1) = rasterize_lines(lines, size)
    if c1 - c0 < target_w:
        # draw larger so the canvas is shrunk vertically instead of blown up sideways
        big = min(MAX_RASTER_SIZE, int(np.ceil(size * target_w / max(c1 - c0, 1))))
        if big > size:
            cov, (c0, c1) = rasterize_lines(lines, big)
            sy = size / big
        else:
            sy = 1.0
    else:
        sy = 1.0
    sx = target_w / max(c1 - c0, 1)
    ch, cw = cov.shape
    new_w, new_h = max(1, round(cw * sx)), max(1, round(ch * sy))
    cov = np.asarray(Image.fromarray(cov).resize((new_w, new_h), Image.Resampling.BOX if sx <= 1 and sy <= 1 else Image.Resampling.BICUBIC))
    rx, ry = new_w / cw, new_h / ch
    sx, sy = sx / rx, sy / ry
    mid_x = (c0 + c1) / 2.0 * rx
    mid_y = new_h / 2.0
    (cx, cy), (ux, uy), (vx, vy) = fr.center, fr.u_axis, fr.v_axis
    # image point = center + sx*(x - mid_x)*u + sy*(y - mid_y)*v ; invert the 2x2
    a, b, c, d = sx * ux, sy * vx, sx * uy, sy * vy
    det = a * d - b * c
    yy, xx = np.nonzero(mask)
    px = xx + 0.5 - cx
    py = yy + 0.5 - cy
    canvas_x = (d * px - b * py) / det + mid_x
    canvas_y = (-c * px + a * py) / det + mid_y
    alpha = _bilinear(cov, canvas_x, canvas_y)
    if color is None:
        color = contrast_color(image, mask)
    out = image.array().copy()
    bg = out[yy, xx].astype(np.float64)
    ink = np.asarray(color, dtype=np.float64)
    blend = bg * (1 - alpha[:, None]) + ink * alpha[:, None]
    out[yy, xx] = np.rint(blend).astype(np.uint8)
    return ImageDoc.from_array(out, image.source_path)


# ---------------------------------------------------------------------------
# render stage


def _check_renderable(text: str, backend: RenderBackendRef) -> bool:
    return text_scripts(text) <= set(backend.renderable_scripts)


def render_text(image: ImageDoc, plan: FusionPlan, backend: RenderBackendRef | None = None) -> ImageDoc:
    """Draw every non-SKIP plan entry.

    DIFFUSION entries go to the remote renderer in one batched request;
    FALLBACK entries (and everything, for a raster-only backend) are drawn
    locally. Pixels outside the target boxes are left as they were.
    """
    backend = backend or RenderBackendRef()
    remote, local = [], []
    for k, e in enumerate(plan.entries):
        if e.route is Route.SKIP or not e.target_text:
            continue
        if e.route is Route.DIFFUSION and backend.kind is RenderKind.REMOTE_DIFFUSION:
            if not _check_renderable(e.target_text, backend):
                if not backend.reroute_unrenderable:
                    bad = sorted(s.value for s in text_scripts(e.target_text) - set(backend.renderable_scripts))
                    raise UnrenderableScript(f"entry {k}: renderer cannot draw scripts {bad}")
                log.warning("entry %d rerouted to the fallback rasterizer", k)
                local.append(e)
                continue
            remote.append(e)
        else:
            local.append(e)

    out = image
    if remote:
        payload = {
            "image_b64": image_to_b64(out),
            "jobs": [{"box": e.target_box.to_json(), "text": e.target_text, "lines": list(e.lines_split)} for e in remote],
        }
        reply = post_json(backend.endpoint, "render", payload, backend.timeout)
        if not isinstance(reply, dict) or not isinstance(reply.get("image_b64"), str):
            raise BackendMalformed("render reply lacks 'image_b64'", reply)
        out = composite(out, _decode(reply["image_b64"]), union_mask(out, [e.target_box for e in remote]))
    for e in local:
        color = e.style.get("color") if e.style else None
        out = draw_text_box(out, e.target_box, e.lines_split or [e.target_text], color)
    return out

