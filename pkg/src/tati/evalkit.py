"""Dataset loading, BLEU, I2T/I2I scoring, rank agreement and reports."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema
import numpy as np
from scipy.stats import rankdata

from .boxtag import ParseStatus, parse_tagged
from .core import ImageDoc, RecognizedLine, TextBox, load_image
from .errors import (
    AlignmentError,
    BackendMalformed,
    DegenerateBox,
    DegenerateInput,
    EmptyCorpus,
    LengthMismatch,
    MissingImage,
    SchemaViolation,
)
from .geometry import iou
from .layout import FusionPlan, Route
from .ocr import MockFallback, MockOcr, OcrBackendRef, OcrKind, run_ocr
from .prompting import LanguagePair
from .translate import TranslationOutcome
from .wire import post_json

log = logging.getLogger(__name__)

IOU_THRESHOLD = 0.3
MAX_ORDER = 4
SPACED_LANGS = frozenset({"en", "ko"})

# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    image_path: Path
    pair: LanguagePair
    lines: tuple[RecognizedLine, ...]
    reference_tagged: str
    reference_joined: str

    def ordered_lines(self) -> list[RecognizedLine]:
        return sorted(self.lines, key=lambda ln: ln.order)

    def load_image(self) -> ImageDoc:
        return load_image(self.image_path).with_source(self.id)


_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
RECORD_SCHEMA = {
    "type": "object",
    "required": ["image", "pair", "lines", "reference_tagged", "reference_joined"],
    "properties": {
        "image": {"type": "string", "minLength": 1},
        "pair": {"type": "string"},
        "lines": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["box", "src_text", "order"],
                "properties": {
                    "box": {"type": "array", "items": _POINT, "minItems": 4, "maxItems": 4},
                    "src_text": {"type": "string", "minLength": 1},
                    "order": {"type": "integer", "minimum": 0},
                },
            },
        },
        "reference_tagged": {"type": "string"},
        "reference_joined": {"type": "string"},
    },
}
INDEX_SCHEMA = {
    "type": "object",
    "required": ["pairs"],
    "properties": {"pairs": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "string"}}}},
}


def parse_record(data, record_id: str, root: Path) -> DatasetRecord:
    """Validate one manifest record. Image paths resolve against ``root``."""
    try:
        jsonschema.validate(data, RECORD_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<record>"
        raise SchemaViolation(record_id, where, exc.message) from None
    try:
        pair = LanguagePair.parse(data["pair"])
    except ValueError as exc:
        raise SchemaViolation(record_id, "pair", str(exc)) from None
    lines = []
    for k, item in enumerate(data["lines"]):
        try:
            box = TextBox.from_json(item["box"])
            lines.append(RecognizedLine(box, item["src_text"].strip() or item["src_text"], 1.0, item["order"]))
        except (DegenerateBox, ValueError) as exc:
            raise SchemaViolation(record_id, f"lines/{k}", str(exc)) from None
    n = len(lines)
    if sorted(ln.order for ln in lines) != list(range(n)):
        raise SchemaViolation(record_id, "lines/order", f"orders {[ln.order for ln in lines]} are not a permutation of 0..{n - 1}")
    ref = parse_tagged(data["reference_tagged"], n, strict=True)
    if ref.status is not ParseStatus.CLEAN:
        raise SchemaViolation(record_id, "reference_tagged", f"does not parse cleanly with {n} boxes")
    image_path = Path(data["image"])
    if not image_path.is_absolute():
        image_path = root / image_path
    if not image_path.is_file():
        raise MissingImage(f"{record_id}: image {image_path} not found")
    return DatasetRecord(record_id, image_path, pair, tuple(lines), data["reference_tagged"], data["reference_joined"])


def load_mtit6(root: str | Path, pair: LanguagePair | str | None = None) -> list[DatasetRecord]:
    """Load every record listed in ``root/index.json``, optionally one pair only."""
    root = Path(root)
    index_path = root / "index.json"
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise SchemaViolation(str(index_path), "index", f"unreadable: {exc}") from None
    except json.JSONDecodeError as exc:
        raise SchemaViolation(str(index_path), "index", f"not JSON: {exc}") from None
    try:
        jsonschema.validate(index, INDEX_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(str(index_path), "pairs", exc.message) from None
    want = LanguagePair.parse(pair) if isinstance(pair, str) else pair
    records = []
    for pair_name, files in sorted(index["pairs"].items()):
        if want is not None and LanguagePair.parse(pair_name) != want:
            continue
        for rel in files:
            rec_path = root / rel
            rec_id = Path(rel).with_suffix("").as_posix()
            try:
                data = json.loads(rec_path.read_text(encoding="utf-8"))
            except OSError as exc:
                raise SchemaViolation(rec_id, "<file>", f"unreadable: {exc}") from None
            except json.JSONDecodeError as exc:
                raise SchemaViolation(rec_id, "<file>", f"not JSON: {exc}") from None
            rec = parse_record(data, rec_id, root)
            if str(rec.pair) != str(LanguagePair.parse(pair_name)):
                raise SchemaViolation(rec_id, "pair", f"listed under {pair_name} but declares {rec.pair}")
            records.append(rec)
    for p, c in sorted(count_by_pair(records).items()):
        log.info("loaded %d records for %s", c, p)
    return records


def count_by_pair(records: Sequence[DatasetRecord]) -> dict[str, int]:
    return dict(Counter(str(r.pair) for r in records))


# ---------------------------------------------------------------------------
# BLEU

_EN_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str, lang: str) -> list[str]:
    """Words and punctuation for en, characters for zh/ja, whitespace words for ko."""
    if lang in ("zh", "ja"):
        return [ch for ch in text if not ch.isspace()]
    if lang == "ko":
        return text.split()
    return _EN_TOKEN.findall(text)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: Sequence[str], references: Sequence[str], lang: str = "en") -> float:
    """Corpus BLEU-4 on a 0-100 scale, unsmoothed, case-sensitive.

    Any order with zero clipped matches gives 0. When the hypotheses are
    too short to contain any n-gram of some order, that order is left out
    of the geometric mean instead of zeroing the score.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatch(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise EmptyCorpus("corpus has no sentences")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = tokenize(hyp, lang), tokenize(ref, lang)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, MAX_ORDER + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    # orders with no hypothesis n-grams at all (very short corpora) are left out
    used = [(m, t) for m, t in zip(matches, totals) if t > 0]
    if hyp_len == 0 or any(m == 0 for m, _ in used):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in used) / len(used)
    bp = 1.0 if hyp_len > ref_len else math.exp(1 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_p)


def join_texts(texts: Sequence[str], lang: str) -> str:
    parts = [t.strip() for t in texts if t and t.strip()]
    return (" " if lang in SPACED_LANGS else "").join(parts)


# ---------------------------------------------------------------------------
# I2T / I2I


def _align(records: Sequence[DatasetRecord], items, what: str) -> list:
    if isinstance(items, Mapping):
        missing = [r.id for r in records if r.id not in items]
        if missing:
            raise AlignmentError(f"no {what} for records {missing[:5]}")
        return [items[r.id] for r in records]
    items = list(items)
    if len(items) != len(records):
        raise AlignmentError(f"{len(items)} {what} for {len(records)} records")
    return items


def i2t_hypotheses(records: Sequence[DatasetRecord], outcomes) -> list[str]:
    out = []
    for rec, oc in zip(records, _align(records, outcomes, "outcomes")):
        texts = oc.texts if isinstance(oc, TranslationOutcome) else dict(oc)
        out.append(join_texts([texts[k] for k in sorted(texts)], rec.pair.tgt))
    return out


def _score_by_pair(records: Sequence[DatasetRecord], hyps: Sequence[str]) -> dict[str, float]:
    groups: dict[str, tuple[list[str], list[str], str]] = {}
    for rec, h in zip(records, hyps):
        hs, rs, _ = groups.setdefault(str(rec.pair), ([], [], rec.pair.tgt))
        hs.append(h)
        rs.append(rec.reference_joined)
    return {p: corpus_bleu(hs, rs, lang) for p, (hs, rs, lang) in sorted(groups.items())}


def i2t_score(records: Sequence[DatasetRecord], outcomes) -> dict[str, float]:
    """Per-pair corpus BLEU of translated texts joined in corrected order."""
    if not records:
        raise EmptyCorpus("no records")
    return _score_by_pair(records, i2t_hypotheses(records, outcomes))


def match_lines(reference: Sequence[RecognizedLine], recognized: Sequence[RecognizedLine], threshold: float = IOU_THRESHOLD) -> dict[int, int]:
    """Greedy maximal-IoU assignment; maps reference index to recognized index."""
    pairs = []
    for i, ref in enumerate(reference):
        for j, rec in enumerate(recognized):
            v = iou(ref.box.corners, rec.box.corners)
            if v >= threshold:
                pairs.append((-v, i, j))
    pairs.sort()
    used_i, used_j, out = set(), set(), {}
    for _, i, j in pairs:
        if i in used_i or j in used_j:
            continue
        used_i.add(i)
        used_j.add(j)
        out[i] = j
    return out


def i2i_hypotheses(records, final_images, ocr_backend: OcrBackendRef, parallelism: int = 1) -> list[str]:
    images = _align(records, final_images, "final images")

    def one(args):
        rec, img = args
        recognized = run_ocr(img, ocr_backend, rec.id)
        ordered = rec.ordered_lines()
        m = match_lines(ordered, recognized)
        return join_texts([recognized[m[k]].text if k in m else "" for k in range(len(ordered))], rec.pair.tgt)

    jobs = list(zip(records, images))
    if parallelism <= 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, jobs))


def i2i_score(records: Sequence[DatasetRecord], final_images, ocr_backend: OcrBackendRef, parallelism: int = 1) -> dict[str, float]:
    """Re-recognize final images, match lines to reference boxes, score per pair."""
    if not records:
        raise EmptyCorpus("no records")
    return _score_by_pair(records, i2i_hypotheses(records, final_images, ocr_backend, parallelism))


def echo_ocr(plans: Mapping[str, FusionPlan]) -> OcrBackendRef:
    """Mock OCR that reads back exactly what each plan drew, keyed by record id."""
    script = {
        rid: [RecognizedLine(e.target_box, e.target_text) for e in plan.entries if e.route is not Route.SKIP and e.target_text.strip()]
        for rid, plan in plans.items()
    }
    return OcrBackendRef(OcrKind.MOCK, mock=MockOcr(script, MockFallback.EMPTY))


# ---------------------------------------------------------------------------
# rank agreement


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman's rho: Pearson correlation of average ranks."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"{len(xs)} vs {len(ys)} values")
    if len(xs) < 2:
        raise DegenerateInput("need at least two observations")
    rx, ry = rankdata(xs), rankdata(ys)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sx, sy = float(np.dot(dx, dx)), float(np.dot(dy, dy))
    if sx == 0 or sy == 0:
        raise DegenerateInput("all values identical in one list")
    rho = float(np.dot(dx, dy)) / math.sqrt(sx * sy)
    return max(-1.0, min(1.0, rho))


# ---------------------------------------------------------------------------
# COMET client and reports


def comet_score(endpoint: str, src: Sequence[str], mt: Sequence[str], ref: Sequence[str], timeout: float = 60.0) -> float:
    reply = post_json(endpoint, "comet", {"src": list(src), "mt": list(mt), "ref": list(ref)}, timeout)
    if not isinstance(reply, dict) or not isinstance(reply.get("score"), (int, float)):
        raise BackendMalformed("comet reply lacks a numeric 'score'", reply)
    return float(reply["score"])


@dataclass
class ImageScore:
    id: str
    i2t: float
    i2i: float | None = None
    issues: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {"id": self.id, "i2t": self.i2t, "issues": list(self.issues)}
        if self.i2i is not None:
            out["i2i"] = self.i2i
        return out


@dataclass
class EvalReport:
    pair: str
    n_images: int
    i2t_bleu: float
    i2i_bleu: float | None = None
    comet: float | None = None
    per_image: list[ImageScore] = field(default_factory=list)
    fingerprint: str = ""
    label: str = ""

    def __post_init__(self):
        for name in ("i2t_bleu", "i2i_bleu"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 100.0):
                raise ValueError(f"{name}={v} outside [0, 100]")

    def to_json(self) -> dict:
        out = {
            "pair": self.pair,
            "n_images": self.n_images,
            "i2t_bleu": self.i2t_bleu,
            "per_image": [s.to_json() for s in self.per_image],
            "config_fingerprint": self.fingerprint,
        }
        if self.label:
            out["label"] = self.label
        if self.i2i_bleu is not None:
            out["i2i_bleu"] = self.i2i_bleu
        if self.comet is not None:
            out["comet"] = self.comet
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> EvalReport:
        return cls(
            data["pair"],
            data["n_images"],
            data["i2t_bleu"],
            data.get("i2i_bleu"),
            data.get("comet"),
            [ImageScore(s["id"], s["i2t"], s.get("i2i"), list(s.get("issues", []))) for s in data.get("per_image", [])],
            data.get("config_fingerprint", ""),
            data.get("label", ""),
        )


def format_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text table with I2T and I2I columns; COMET appears only if any report has it."""
    with_comet = any(r.comet is not None for r in reports)
    header = ["model", "pair", "I2T BLEU"] + (["COMET"] if with_comet else []) + ["I2I BLEU"]
    rows = []
    for r in reports:
        row = [r.label or "-", r.pair.replace("-", "→"), f"{r.i2t_bleu:.1f}"]
        if with_comet:
            row.append("-" if r.comet is None else f"{r.comet:.1f}")
        row.append("-" if r.i2i_bleu is None else f"{r.i2i_bleu:.1f}")
        rows.append(row)
    widths = [max(len(h), *(len(row[k]) for row in rows)) if rows else len(h) for k, h in enumerate(header)]

    def fmt(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(cells[1:], widths[1:]))]
        return "  ".join([first] + rest).rstrip()

    return "\n".join([fmt(header)] + [fmt(r) for r in rows]) + "\n"


# ---------------------------------------------------------------------------
# harness


@dataclass
class EvalRun:
    report: EvalReport
    outcomes: dict[str, TranslationOutcome]
    plans: dict[str, FusionPlan]
    final_images: dict[str, ImageDoc]


def evaluate(
    records: Sequence[DatasetRecord],
    config,
    with_i2i: bool = False,
    ocr_backend: OcrBackendRef | None = None,
    label: str = "",
) -> EvalRun:
    """Run the pipeline on dataset lines and score I2T (and optionally I2I).

    The dataset's own boxes and corrected order stand in for OCR. I2I
    re-recognizes final images with ``ocr_backend`` (default: the
    configured OCR); pass :func:`echo_ocr` output to close the loop.
    """
    from .pipeline import run_pipeline

    if not records:
        raise EmptyCorpus("no records to evaluate")
    pairs = {str(r.pair) for r in records}
    if len(pairs) != 1:
        raise AlignmentError(f"records span several pairs: {sorted(pairs)}")

    def one(rec: DatasetRecord):
        return run_pipeline(rec.load_image(), config, rec.pair, rec.id, rec.ordered_lines())

    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(one, records))
    else:
        results = [one(r) for r in records]
    outcomes = {r.id: res.outcome for r, res in zip(records, results)}
    plans = {r.id: res.plan for r, res in zip(records, results)}
    finals = {r.id: res.final_image for r, res in zip(records, results)}

    lang = records[0].pair.tgt
    hyps = i2t_hypotheses(records, outcomes)
    i2t = corpus_bleu(hyps, [r.reference_joined for r in records], lang)
    i2i_hyps = None
    i2i = None
    if with_i2i:
        backend = ocr_backend or config.ocr
        i2i_hyps = i2i_hypotheses(records, finals, backend, config.parallelism)
        i2i = corpus_bleu(i2i_hyps, [r.reference_joined for r in records], lang)
    comet = None
    if config.comet_endpoint:
        comet = comet_score(
            config.comet_endpoint,
            [join_texts([ln.text for ln in r.ordered_lines()], records[0].pair.src) for r in records],
            hyps,
            [r.reference_joined for r in records],
            config.comet_timeout,
        )
    per_image = []
    for k, rec in enumerate(records):
        issues = [i.kind.value for i in outcomes[rec.id].issues] if outcomes[rec.id] else []
        per_image.append(
            ImageScore(
                rec.id,
                corpus_bleu([hyps[k]], [rec.reference_joined], lang),
                corpus_bleu([i2i_hyps[k]], [rec.reference_joined], lang) if i2i_hyps is not None else None,
                issues,
            )
        )
    report = EvalReport(str(records[0].pair), len(records), i2t, i2i, comet, per_image, config.fingerprint(), label)
    return EvalRun(report, outcomes, plans, finals)
