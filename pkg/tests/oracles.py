"""Reference implementations written independently of the package.

They favor obviousness over speed: plain loops, no shared helpers with the
code under test.
"""

from __future__ import annotations

import math
import re


# --- BLEU -------------------------------------------------------------------


def oracle_tokens(text, lang):
    if lang in ("zh", "ja"):
        return [c for c in text if c not in " \t\n\r\f\v　" and not c.isspace()]
    if lang == "ko":
        return text.split()
    return re.findall(r"\w+|[^\w\s]", text)


def oracle_bleu(hyps, refs, lang="en"):
    matched = {1: 0, 2: 0, 3: 0, 4: 0}
    possible = {1: 0, 2: 0, 3: 0, 4: 0}
    c = r = 0
    for hyp, ref in zip(hyps, refs):
        h = oracle_tokens(hyp, lang)
        g = oracle_tokens(ref, lang)
        c += len(h)
        r += len(g)
        for n in (1, 2, 3, 4):
            hcount = {}
            for i in range(len(h) - n + 1):
                key = " \x00 ".join(h[i:i + n])
                hcount[key] = hcount.get(key, 0) + 1
            rcount = {}
            for i in range(len(g) - n + 1):
                key = " \x00 ".join(g[i:i + n])
                rcount[key] = rcount.get(key, 0) + 1
            for key, cnt in hcount.items():
                matched[n] += min(cnt, rcount.get(key, 0))
            possible[n] += max(0, len(h) - n + 1)
    if c == 0:
        return 0.0
    orders = [n for n in (1, 2, 3, 4) if possible[n] > 0]
    for n in orders:
        if matched[n] == 0:
            return 0.0
    logs = [math.log(matched[n]) - math.log(possible[n]) for n in orders]
    geo = math.exp(sum(logs) / len(orders))
    bp = math.exp(1.0 - r / c) if c <= r else 1.0
    return 100.0 * bp * geo


# --- Spearman ---------------------------------------------------------------


def oracle_average_ranks(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def oracle_spearman(xs, ys):
    rx, ry = oracle_average_ranks(xs), oracle_average_ranks(ys)
    n = len(rx)
    mx, my = sum(rx) / n, sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return cov / math.sqrt(vx * vy)


# --- geometry ---------------------------------------------------------------


def oracle_scale_corners(corners, f):
    """Scale along c0->c1 about the centroid using a direct change of basis."""
    cx = sum(p[0] for p in corners) / 4
    cy = sum(p[1] for p in corners) / 4
    (x0, y0), (x1, y1), _, (x3, y3) = corners
    ux, uy = x1 - x0, y1 - y0
    lu = math.hypot(ux, uy)
    ux, uy = ux / lu, uy / lu
    vx, vy = x3 - x0, y3 - y0
    lv = math.hypot(vx, vy)
    vx, vy = vx / lv, vy / lv
    out = []
    for px, py in corners:
        dx, dy = px - cx, py - cy
        # solve [u v][a b]^T = d by Cramer's rule
        det = ux * vy - vx * uy
        a = (dx * vy - vx * dy) / det
        b = (ux * dy - dx * uy) / det
        out.append((cx + f * a * ux + b * vx, cy + f * a * uy + b * vy))
    return out


def oracle_weighted_length(text):
    total = 0.0
    for ch in text:
        cp = ord(ch)
        if ch.isspace():
            total += 0.5
        elif 0x4E00 <= cp <= 0x9FFF or 0x3400 <= cp <= 0x4DBF or 0xAC00 <= cp <= 0xD7A3 or 0x3040 <= cp <= 0x30FF:
            total += 2.5
        else:
            total += 1.0
    return total


# --- erasure ----------------------------------------------------------------


def oracle_ring_median(pixels, inside, excluded):
    """Lower per-channel median over pixels 8-adjacent to ``inside`` but not in it.

    ``pixels`` is a list of rows of (r, g, b); ``inside``/``excluded`` are
    sets of (x, y).
    """
    h, w = len(pixels), len(pixels[0])
    ring = set()
    for (x, y) in inside:
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                q = (x + dx, y + dy)
                if 0 <= q[0] < w and 0 <= q[1] < h and q not in inside and q not in excluded:
                    ring.add(q)
    src = ring if ring else inside
    out = []
    for ch in range(3):
        vals = sorted(pixels[y][x][ch] for (x, y) in src)
        out.append(vals[(len(vals) - 1) // 2])
    return tuple(out)
