"""Deterministic synthetic fixture set in the MTIT6 manifest layout.

Writes sign-like images with one to three lines of source text, one record
per image, an index, a scripted OCR file and ready-to-use all-mock configs.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np

from .boxtag import serialize_tagged
from .core import ImageDoc, RecognizedLine, TextBox, save_png, weighted_length
from .evalkit import join_texts
from .fusion import draw_text_box

LANGS = ("zh", "en", "ko", "ja")

# one phrase per row, same meaning in zh / en / ko / ja
PHRASES = [
    ("出口", "EXIT", "출구", "出口"),
    ("禁止吸烟", "NO SMOKING", "금연", "禁煙"),
    ("小心地滑", "CAUTION WET FLOOR", "미끄럼 주의", "足元注意"),
    ("欢迎光临", "WELCOME", "어서 오세요", "いらっしゃいませ"),
    ("营业时间", "OPENING HOURS", "영업 시간", "営業時間"),
    ("上午九点至下午六点", "9 AM TO 6 PM", "오전 9시부터 오후 6시까지", "午前九時から午後六時まで"),
    ("停车场", "PARKING", "주차장", "駐車場"),
    ("请勿触摸", "PLEASE DO NOT TOUCH", "만지지 마세요", "触らないでください"),
    ("紧急出口在左侧", "EMERGENCY EXIT ON THE LEFT", "비상구는 왼쪽에 있습니다", "非常口は左側です"),
    ("今日特价", "TODAY'S SPECIAL", "오늘의 특가", "本日の特価"),
    ("新鲜水果", "FRESH FRUIT", "신선한 과일", "新鮮な果物"),
    ("地铁站", "SUBWAY STATION", "지하철역", "地下鉄駅"),
    ("减速慢行", "SLOW DOWN", "서행", "徐行"),
    ("洗手间", "RESTROOM", "화장실", "お手洗い"),
    ("谢谢合作", "THANK YOU FOR YOUR COOPERATION", "협조해 주셔서 감사합니다", "ご協力ありがとうございます"),
]

PAIR_COUNTS = {"zh-en": 4, "en-zh": 4, "zh-ko": 3, "ko-zh": 3, "zh-ja": 3, "ja-zh": 3}

PALETTE = [
    ((245, 245, 240), (20, 20, 20)),
    ((20, 70, 160), (250, 250, 250)),
    ((30, 120, 60), (255, 255, 255)),
    ((250, 210, 40), (10, 10, 10)),
    ((180, 30, 30), (255, 240, 230)),
]

UNIT_PX = 9.0
LINE_H = 30
GAP = 22
MARGIN = 36


def phrase_table(src: str, tgt: str) -> dict[str, str]:
    a, b = LANGS.index(src), LANGS.index(tgt)
    return {row[a]: row[b] for row in PHRASES}


def _background(rng: random.Random, w: int, h: int, base, two_tone: bool) -> np.ndarray:
    arr = np.empty((h, w, 3), dtype=np.uint8)
    arr[:] = base
    if two_tone:
        split = rng.randint(w // 3, 2 * w // 3)
        arr[:, split:] = [max(0, c - 35) for c in base]
    return arr


def make_record(rng: random.Random, pair: str, index: int):
    """Return ``(image, record_json, ocr_lines)`` for one synthetic sign."""
    src, tgt = pair.split("-")
    a, b = LANGS.index(src), LANGS.index(tgt)
    n = rng.choice([1, 2, 2, 3])
    rows = rng.sample(PHRASES, n)
    texts = [r[a] for r in rows]
    refs = [r[b] for r in rows]
    widths = [max(48.0, weighted_length(t) * UNIT_PX) for t in texts]
    w = int(max(widths) * 2 + 2 * MARGIN)
    h = n * LINE_H + (n - 1) * GAP + 2 * MARGIN
    bg, fg = PALETTE[rng.randrange(len(PALETTE))]
    img = ImageDoc.from_array(_background(rng, w, h, bg, rng.random() < 0.3))
    lines = []
    for k, (text, lw) in enumerate(zip(texts, widths)):
        y0 = MARGIN + k * (LINE_H + GAP)
        x0 = round((w - lw) / 2 + rng.uniform(-8, 8))
        box = TextBox.from_rect(x0, y0, x0 + round(lw), y0 + LINE_H)
        img = draw_text_box(img, box, [text], fg)
        lines.append(RecognizedLine(box, text, 1.0, k))
    # corrected order sometimes differs from the top-to-bottom layout order
    order = list(range(n))
    if n > 1 and index % 3 == 2:
        order = order[::-1]
    ordered_refs = [None] * n
    for k, o in enumerate(order):
        ordered_refs[o] = refs[k]
    record = {
        "image": f"imgs/{pair}/{index:04d}.png",
        "pair": pair,
        "lines": [{"box": ln.box.to_json(), "src_text": ln.text, "order": o} for ln, o in zip(lines, order)],
        "reference_tagged": serialize_tagged(ordered_refs).canonical_text,
        "reference_joined": join_texts(ordered_refs, tgt),
    }
    ocr = [{"box": ln.box.to_json(), "text": ln.text, "confidence": 1.0} for ln in lines]
    return img, record, ocr


def build_fixtures(root: str | Path, seed: int = 7, counts: dict[str, int] | None = None) -> Path:
    """Write the fixture set under ``root`` and return it. Same seed, same bytes."""
    root = Path(root)
    counts = counts or PAIR_COUNTS
    rng = random.Random(seed)
    index: dict[str, list[str]] = {}
    ocr_images: dict[str, list] = {}
    for pair, count in counts.items():
        for i in range(count):
            img, record, ocr = make_record(rng, pair, i)
            img_path = root / record["image"]
            img_path.parent.mkdir(parents=True, exist_ok=True)
            save_png(img, img_path)
            rel = f"records/{pair}/{i:04d}.json"
            (root / rel).parent.mkdir(parents=True, exist_ok=True)
            (root / rel).write_text(json.dumps(record, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
            index.setdefault(pair, []).append(rel)
            ocr_images[f"{pair}_{i:04d}"] = ocr
            ocr_images[f"records/{pair}/{i:04d}"] = ocr
            flat = root / "flat" / f"{pair}_{i:04d}.png"
            flat.parent.mkdir(parents=True, exist_ok=True)
            save_png(img, flat)
    (root / "index.json").write_text(json.dumps({"pairs": index}, indent=2) + "\n", encoding="utf-8")
    _write_json(root / "ocr_script.json", {"fallback": "empty", "images": ocr_images})
    base = {
        "ocr": {"kind": "mock", "script": "ocr_script.json"},
        "eraser": {"method": "SOLID_FILL"},
        "renderer": {"kind": "FALLBACK_RASTER"},
        "dump": {"plan": True, "tagged": True},
    }
    _write_json(root / "config.json", {**base, "pair": "zh-en", "translator": {"kind": "mock", "mock": {"mode": "identity"}}})
    for pair in counts:
        src, tgt = pair.split("-")
        cfg = {**base, "pair": pair, "translator": {"kind": "mock", "mock": {"mode": "table", "table": phrase_table(src, tgt)}}}
        _write_json(root / f"config_{pair}.json", cfg)
    return root


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def main(argv=None) -> int:
    import argparse

    ap = argparse.ArgumentParser(description="write the synthetic fixture set")
    ap.add_argument("root")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    build_fixtures(args.root, args.seed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
