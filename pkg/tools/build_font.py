"""Rebuild the pinned fallback font shipped in ``src/tati/data/fonts``.

Sources are the Noto Sans SC, KR and JP 400-weight subsets published by
the @fontsource npm packages (SIL OFL 1.1). They are merged into one WOFF2
file restricted to the repertoire the fallback rasterizer promises:

* ASCII, Latin-1 and general punctuation
* CJK symbols, full-width forms, hiragana, katakana
* hanzi/kanji encodable in GB2312 or JIS X 0208
* hangul syllables encodable in KS X 1001, plus compatibility jamo

Usage::

    npm pack @fontsource/noto-sans-sc@5.3.0 @fontsource/noto-sans-kr@5.3.0 @fontsource/noto-sans-jp@5.3.0
    pip install brotli fonttools
    python tools/build_font.py fontsource-noto-sans-sc-5.3.0.tgz fontsource-noto-sans-kr-5.3.0.tgz \
        fontsource-noto-sans-jp-5.3.0.tgz

Build-time only; the runtime reads the resulting file through Pillow.
"""

from __future__ import annotations

import argparse
import io
import sys
import tarfile
from pathlib import Path

from fontTools import subset
from fontTools.merge import Merger
from fontTools.ttLib import TTFont
from fontTools.ttLib.tables._c_m_a_p import CmapSubtable

OUT = Path(__file__).resolve().parents[1] / "src" / "tati" / "data" / "fonts" / "TatiFallback-Regular.woff2"
DROP_TABLES = ["GSUB", "GPOS", "GDEF", "BASE", "STAT", "vhea", "vmtx", "VORG", "DSIG"]


def repertoire() -> set[int]:
    cps: set[int] = set(range(0x20, 0x7F)) | set(range(0xA0, 0x100))
    cps |= set(range(0x2000, 0x2070))
    cps |= set(range(0x3000, 0x3040))  # CJK symbols and punctuation
    cps |= set(range(0x3040, 0x3100))  # kana
    cps |= set(range(0x3130, 0x3190))  # hangul compatibility jamo
    cps |= set(range(0xFF00, 0xFFF0))
    for cp in range(0x4E00, 0xA000):
        ch = chr(cp)
        for enc in ("gb2312", "euc_jp"):
            try:
                ch.encode(enc)
            except UnicodeEncodeError:
                continue
            cps.add(cp)
            break
    for cp in range(0xAC00, 0xD7A4):
        try:
            chr(cp).encode("euc_kr")
        except UnicodeEncodeError:
            continue
        cps.add(cp)
    return cps


def load_subsets(tgz: Path, wanted: set[int]) -> list[TTFont]:
    fonts = []
    with tarfile.open(tgz) as tar:
        names = sorted(
            m.name for m in tar.getmembers() if m.name.endswith("-400-normal.woff2")
        )
        for name in names:
            font = TTFont(io.BytesIO(tar.extractfile(name).read()))
            cmap = font.getBestCmap()
            keep = wanted & set(cmap)
            if not keep:
                continue
            opts = subset.Options()
            opts.layout_features = []
            opts.name_IDs = ["*"]
            opts.notdef_outline = True
            sub = subset.Subsetter(opts)
            sub.populate(unicodes=sorted(keep))
            sub.subset(font)
            for tag in DROP_TABLES:
                if tag in font:
                    del font[tag]
            font.flavor = None
            buf = io.BytesIO()
            font.save(buf)
            buf.seek(0)
            fonts.append(buf)
            wanted -= keep
    return fonts


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("packages", nargs="+", type=Path, help="npm pack tarballs, in priority order")
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args(argv)

    wanted = repertoire()
    total = len(wanted)
    parts = []
    for pkg in args.packages:
        parts.extend(load_subsets(pkg, wanted))
    merged = Merger().merge(parts)
    # a merged BMP map overflows the 16-bit format 4 offsets; format 12 alone is enough
    mapping = merged.getBestCmap()
    table = CmapSubtable.newSubtable(12)
    table.platformID, table.platEncID, table.language = 3, 10, 0
    table.cmap = dict(mapping)
    merged["cmap"].tables = [table]
    merged["name"].setName("Tati Fallback", 1, 3, 1, 0x409)
    merged["name"].setName("Tati Fallback Regular", 4, 3, 1, 0x409)
    merged.flavor = "woff2"
    args.out.parent.mkdir(parents=True, exist_ok=True)
    merged.save(args.out)
    print(f"{args.out}: {total - len(wanted)}/{total} codepoints, {args.out.stat().st_size} bytes")
    if wanted:
        print(f"missing {len(wanted)} codepoints, e.g. {[hex(c) for c in sorted(wanted)[:10]]}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
