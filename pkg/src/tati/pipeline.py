"""End-to-end run over one image: OCR, translate, plan, erase, render."""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .boxtag import TaggedSequence, serialize_tagged
from .config import PipelineConfig, TranslationStrategy
from .core import ImageDoc, RecognizedLine
from .errors import StageError, TatiError
from .fusion import ErasureRequest, erase_regions, estimate_style, render_text, union_mask
from .layout import FusionPlan, build_plan
from .ocr import run_ocr
from .prompting import LanguagePair
from .translate import TranslationOutcome, translate_per_box, translate_whole

log = logging.getLogger(__name__)

STAGES = ("ocr", "translate", "layout", "erase", "render")


@dataclass
class PipelineResult:
    final_image: ImageDoc
    lines: list[RecognizedLine]
    tagged_source: TaggedSequence | None
    outcome: TranslationOutcome | None
    plan: FusionPlan
    erased_image: ImageDoc | None = None
    trace: dict[str, float] = field(default_factory=dict)
    no_text_found: bool = False

    def tagged_dump(self) -> dict:
        """Serializable record of the translation stage (timings excluded)."""
        return {
            "lines": [ln.to_json() for ln in self.lines],
            "tagged_source": self.tagged_source.canonical_text if self.tagged_source else None,
            "n_boxes": self.tagged_source.n_boxes if self.tagged_source else 0,
            "outcome": self.outcome.to_json() if self.outcome else None,
            "no_text_found": self.no_text_found,
        }


def dumps_tagged(result: PipelineResult) -> str:
    return json.dumps(result.tagged_dump(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def loads_tagged(text: str) -> dict:
    """Parse a tagged dump back into typed pieces."""
    data = json.loads(text)
    src = data["tagged_source"]
    return {
        "lines": [RecognizedLine.from_json(x) for x in data["lines"]],
        "tagged_source": TaggedSequence(src, data["n_boxes"]) if src is not None else None,
        "outcome": TranslationOutcome.from_json(data["outcome"]) if data["outcome"] else None,
        "no_text_found": bool(data["no_text_found"]),
    }


@contextmanager
def _stage(name: str, trace: dict[str, float]):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (TatiError, ValueError, OSError) as exc:
        raise StageError(name, exc) from exc
    finally:
        trace[name] = time.perf_counter() - t0


def translate_lines(
    lines: Sequence[RecognizedLine], pair: LanguagePair, config: PipelineConfig, image: ImageDoc | None = None
) -> tuple[TaggedSequence, TranslationOutcome]:
    """Run the configured translation mode on ordered lines."""
    tagged = serialize_tagged([ln.text for ln in lines])
    if config.translation_mode is TranslationStrategy.PER_BOX:
        outcome = translate_per_box(lines, pair, config.translator, config.prompt, config.parallelism)
    else:
        img = image if config.translator.accepts_image else None
        outcome = translate_whole(
            tagged, pair, config.translator, config.prompt, img, config.strict_parsing, config.parallelism
        )
    return tagged, outcome


def run_pipeline(
    image: ImageDoc,
    config: PipelineConfig,
    pair: LanguagePair | None = None,
    image_id: str | None = None,
    lines: Sequence[RecognizedLine] | None = None,
    texts: Mapping[int, str] | None = None,
) -> PipelineResult:
    """Translate the text of one image and fuse it back.

    ``lines`` skips OCR with already ordered lines (dataset evaluation);
    ``texts`` skips translation with a fixed order-keyed mapping.
    Stage failures surface as StageError naming the stage.
    """
    pair = pair or config.pair
    if pair is None:
        raise StageError("translate", ValueError("no language pair configured"))
    trace: dict[str, float] = {}

    with _stage("ocr", trace):
        if lines is None:
            lines = run_ocr(image, config.ocr, image_id)
        lines = sorted(lines, key=lambda ln: ln.order)
    if not lines:
        log.info("no text found in %s", image_id or image.source_path or "image")
        return PipelineResult(image, [], None, None, FusionPlan([], config.renderer.max_units), image, trace, True)

    with _stage("translate", trace):
        if texts is None:
            tagged, outcome = translate_lines(lines, pair, config, image)
        else:
            tagged = serialize_tagged([ln.text for ln in lines])
            outcome = None
    keyed = {ln.order: (outcome.texts.get(k, "") if outcome else texts.get(ln.order, "")) for k, ln in enumerate(lines)}

    with _stage("layout", trace):
        sources = [ln.box for ln in lines]
        everywhere = union_mask(image, sources)
        styles = [estimate_style(image, b, everywhere) for b in sources]
        plan = build_plan(
            lines,
            keyed,
            image,
            config.resize,
            config.weights,
            config.renderer.max_units,
            config.renderer.diffusion_scripts,
            styles,
        )

    with _stage("erase", trace):
        erased = erase_regions(ErasureRequest(image, sources, config.eraser.method), config.eraser)

    with _stage("render", trace):
        final = render_text(erased, plan, config.renderer)

    return PipelineResult(final, list(lines), tagged, outcome, plan, erased, trace, False)
