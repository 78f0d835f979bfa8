"""Polygon helpers: areas, convex clipping, IoU and pixel masks."""

from __future__ import annotations

from typing import Sequence

import numpy as np

Point = tuple[float, float]

EPS = 1e-12


def signed_area(pts: Sequence[Point]) -> float:
    """Shoelace area. Positive for clockwise order in image (y-down) coordinates."""
    s = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return s / 2.0


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    """Closed-segment intersection test, collinear overlaps included."""
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True

    def on_seg(a: Point, b: Point, c: Point) -> bool:
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    if d1 == 0 and on_seg(q1, q2, p1):
        return True
    if d2 == 0 and on_seg(q1, q2, p2):
        return True
    if d3 == 0 and on_seg(p1, p2, q1):
        return True
    if d4 == 0 and on_seg(p1, p2, q2):
        return True
    return False


def is_convex(pts: Sequence[Point]) -> bool:
    n = len(pts)
    sign = 0
    for i in range(n):
        c = _cross(pts[i], pts[(i + 1) % n], pts[(i + 2) % n])
        if c != 0:
            s = 1 if c > 0 else -1
            if sign and s != sign:
                return False
            sign = s
    return True


def _clip_halfplane(poly: list[Point], a: Point, b: Point, sign: float) -> list[Point]:
    # keeps points p with sign * cross(a, b, p) >= 0
    out: list[Point] = []
    n = len(poly)
    for i in range(n):
        cur = poly[i]
        nxt = poly[(i + 1) % n]
        c_cur = sign * _cross(a, b, cur)
        c_nxt = sign * _cross(a, b, nxt)
        if c_cur >= 0:
            out.append(cur)
        if (c_cur >= 0) != (c_nxt >= 0):
            t = c_cur / (c_cur - c_nxt)
            out.append((cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])))
    return out


def clip_convex(subject: Sequence[Point], clipper: Sequence[Point]) -> list[Point]:
    """Sutherland-Hodgman clip of ``subject`` by the convex polygon ``clipper``."""
    poly = list(subject)
    sign = 1.0 if signed_area(clipper) >= 0 else -1.0
    n = len(clipper)
    for i in range(n):
        if not poly:
            break
        poly = _clip_halfplane(poly, clipper[i], clipper[(i + 1) % n], sign)
    return poly


def intersection_area(a: Sequence[Point], b: Sequence[Point]) -> float:
    """Area of the intersection of two quads.

    Exact when at least one of them is convex; non-convex pairs are
    approximated by their convex hulls.
    """
    if is_convex(b):
        poly = clip_convex(a, b)
    elif is_convex(a):
        poly = clip_convex(b, a)
    else:
        poly = clip_convex(convex_hull(a), convex_hull(b))
    if len(poly) < 3:
        return 0.0
    return abs(signed_area(poly))


def iou(a: Sequence[Point], b: Sequence[Point]) -> float:
    inter = intersection_area(a, b)
    union = abs(signed_area(a)) + abs(signed_area(b)) - inter
    if union <= EPS:
        return 0.0
    return inter / union


def convex_hull(pts: Sequence[Point]) -> list[Point]:
    p = sorted(set(map(tuple, pts)))
    if len(p) <= 2:
        return list(p)
    lower: list[Point] = []
    for q in p:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    upper: list[Point] = []
    for q in reversed(p):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    return lower[:-1] + upper[:-1]


def rect_polygon(width: float, height: float) -> list[Point]:
    return [(0.0, 0.0), (float(width), 0.0), (float(width), float(height)), (0.0, float(height))]


def polygon_mask(pts: Sequence[Point], width: int, height: int) -> np.ndarray:
    """Boolean (height, width) mask of pixels whose centers fall inside the polygon.

    Uses the even-odd rule on pixel centers ``(x + 0.5, y + 0.5)``; a center
    lying exactly on an edge counts as inside.
    """
    mask = np.zeros((height, width), dtype=bool)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0 = max(0, int(np.floor(min(xs) - 0.5)))
    x1 = min(width, int(np.ceil(max(xs) + 0.5)))
    y0 = max(0, int(np.floor(min(ys) - 0.5)))
    y1 = min(height, int(np.ceil(max(ys) + 0.5)))
    if x0 >= x1 or y0 >= y1:
        return mask
    gx, gy = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)
    inside = np.zeros(gx.shape, dtype=bool)
    boundary = np.zeros(gx.shape, dtype=bool)
    n = len(pts)
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        crosses = (ay > gy) != (by > gy)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (gy - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (gx < xint)
        # on-edge test
        cr = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
        within = (
            (gx >= min(ax, bx)) & (gx <= max(ax, bx)) & (gy >= min(ay, by)) & (gy <= max(ay, by))
        )
        boundary |= (np.abs(cr) <= 1e-9) & within
    mask[y0:y1, x0:x1] = inside | boundary
    return mask


def dilate(mask: np.ndarray, radius: int = 1) -> np.ndarray:
    """Square (8-connected) binary dilation by ``radius`` pixels."""
    out = mask.copy()
    h, w = mask.shape
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dx == 0 and dy == 0:
                continue
            src = mask[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
            out[max(0, dy):h - max(0, -dy), max(0, dx):w - max(0, -dx)] |= src
    return out
