"""JSON pipeline configuration with schema validation."""

from __future__ import annotations

import copy
import enum
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .core import DEFAULT_WEIGHTS, ScriptClass, WeightTable
from .errors import ConfigError
from .fusion import EraseMethod, EraserBackendRef, RenderBackendRef, RenderKind
from .layout import ResizeAxis, ResizePolicy
from .ocr import MockFallback, MockOcr, OcrBackendRef, OcrKind
from .prompting import DemoStore, LanguagePair, PromptTemplate
from .translate import MockTranslator, PromptDeps, TranslatorBackendRef, TranslatorKind

ENV_VAR = "TATI_CONFIG"


class TranslationStrategy(str, enum.Enum):
    CONTEXT = "context"
    PER_BOX = "per_box"


_ENDPOINT = {"type": "string", "minLength": 1}
_TIMEOUT = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "pair": {"type": "string"},
        "ocr": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": [k.value for k in OcrKind]},
                "endpoint": _ENDPOINT,
                "timeout": _TIMEOUT,
                "script": {"type": "string"},
                "fallback": {"enum": [m.value for m in MockFallback]},
            },
        },
        "translator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": [k.value for k in TranslatorKind]},
                "endpoint": _ENDPOINT,
                "accepts_image": {"type": "boolean"},
                "timeout": _TIMEOUT,
                "max_attempts": {"type": "integer", "minimum": 1},
                "options": {"type": "object"},
                "mock": {"type": "object"},
                "mock_file": {"type": "string"},
            },
        },
        "translation_mode": {"enum": [s.value for s in TranslationStrategy]},
        "strict_parsing": {"type": "boolean"},
        "eraser": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": [m.value for m in EraseMethod]},
                "endpoint": _ENDPOINT,
                "timeout": _TIMEOUT,
                "erase_fallback": {"type": "boolean"},
            },
        },
        "renderer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": [k.value for k in RenderKind]},
                "endpoint": _ENDPOINT,
                "timeout": _TIMEOUT,
                "max_units": {"type": "number", "exclusiveMinimum": 0},
                "renderable_scripts": {"type": "array", "items": {"enum": [s.value for s in ScriptClass]}},
                "reroute_unrenderable": {"type": "boolean"},
            },
        },
        "resize": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hi_threshold": {"type": "number"},
                "lo_threshold": {"type": "number"},
                "clamp_min": {"type": "number"},
                "clamp_max": {"type": "number"},
                "axis": {"enum": [a.value for a in ResizeAxis]},
                "enabled": {"type": "boolean"},
                "word_count": {"type": "boolean"},
            },
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {s.value: {"type": "number", "minimum": 0} for s in ScriptClass},
        },
        "prompting": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "shots": {"type": "integer", "minimum": 0},
                "store": {"type": "string"},
                "template": {"type": "string"},
            },
        },
        "parallelism": {"type": "integer", "minimum": 1},
        "dump": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"plan": {"type": "boolean"}, "tagged": {"type": "boolean"}},
        },
        "comet": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"endpoint": _ENDPOINT, "timeout": _TIMEOUT},
        },
    },
}


@dataclass
class PipelineConfig:
    pair: LanguagePair | None = None
    ocr: OcrBackendRef = field(default_factory=OcrBackendRef)
    translator: TranslatorBackendRef = field(default_factory=TranslatorBackendRef)
    eraser: EraserBackendRef = field(default_factory=EraserBackendRef)
    renderer: RenderBackendRef = field(default_factory=RenderBackendRef)
    resize: ResizePolicy = field(default_factory=ResizePolicy)
    weights: WeightTable = DEFAULT_WEIGHTS
    prompt: PromptDeps = field(default_factory=PromptDeps)
    translation_mode: TranslationStrategy = TranslationStrategy.CONTEXT
    strict_parsing: bool = False
    parallelism: int = 1
    dump_plan: bool = False
    dump_tagged: bool = False
    comet_endpoint: str | None = None
    comet_timeout: float = 60.0
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.translation_mode = TranslationStrategy(self.translation_mode)
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    def fingerprint(self) -> str:
        """Short stable hash of the configuration as written."""
        blob = json.dumps(self.raw, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **changes) -> PipelineConfig:
        new = copy.copy(self)
        for k, v in changes.items():
            if not hasattr(new, k):
                raise AttributeError(k)
            setattr(new, k, v)
        return new


def _path(base: Path, value: str, what: str) -> Path:
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ConfigError(f"{what} file {p} does not exist")
    return p


def config_from_dict(data: Mapping, base_dir: str | Path = ".") -> PipelineConfig:
    """Build a config from parsed JSON. Relative paths resolve against ``base_dir``."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    base = Path(base_dir)
    try:
        pair = LanguagePair.parse(data["pair"]) if "pair" in data else None

        o = data.get("ocr", {})
        mock_ocr = None
        if o.get("kind", "mock") == "mock":
            mock_ocr = MockOcr.load(_path(base, o["script"], "OCR script")) if "script" in o else MockOcr()
            if "fallback" in o:
                mock_ocr.fallback = MockFallback(o["fallback"])
        ocr = OcrBackendRef(o.get("kind", "mock"), o.get("endpoint"), o.get("timeout", 30.0), mock_ocr)

        t = data.get("translator", {})
        mock_tr = None
        if t.get("kind", "mock") == "mock":
            mock_settings = dict(t.get("mock", {}))
            if "mock_file" in t:
                mock_settings = json.loads(_path(base, t["mock_file"], "translator mock").read_text(encoding="utf-8"))
            mock_tr = MockTranslator.from_json(mock_settings)
        translator = TranslatorBackendRef(
            t.get("kind", "mock"),
            t.get("endpoint"),
            t.get("accepts_image", False),
            t.get("timeout", 60.0),
            t.get("max_attempts", 3),
            dict(t.get("options", {})),
            mock_tr,
        )

        e = data.get("eraser", {})
        eraser = EraserBackendRef(e.get("method", "SOLID_FILL"), e.get("endpoint"), e.get("timeout", 60.0), e.get("erase_fallback", False))

        r = data.get("renderer", {})
        renderer = RenderBackendRef(
            r.get("kind", "FALLBACK_RASTER"),
            r.get("endpoint"),
            r.get("max_units", 20.0),
            frozenset(r["renderable_scripts"]) if "renderable_scripts" in r else RenderBackendRef.renderable_scripts,
            r.get("timeout", 120.0),
            r.get("reroute_unrenderable", False),
        )

        resize = ResizePolicy(**data.get("resize", {}))
        weights = DEFAULT_WEIGHTS.with_overrides(**data["weights"]) if "weights" in data else DEFAULT_WEIGHTS

        p = data.get("prompting", {})
        shots = p.get("shots", 5)
        store = DemoStore.load(_path(base, p["store"], "demo store")) if "store" in p else DemoStore.bundled()
        template = (
            PromptTemplate.from_file(_path(base, p["template"], "template"), shots)
            if "template" in p
            else PromptTemplate.default(shots)
        )

        dump = data.get("dump", {})
        comet = data.get("comet", {})
        return PipelineConfig(
            pair=pair,
            ocr=ocr,
            translator=translator,
            eraser=eraser,
            renderer=renderer,
            resize=resize,
            weights=weights,
            prompt=PromptDeps(store, template),
            translation_mode=data.get("translation_mode", "context"),
            strict_parsing=data.get("strict_parsing", False),
            parallelism=data.get("parallelism", 1),
            dump_plan=dump.get("plan", False),
            dump_tagged=dump.get("tagged", False),
            comet_endpoint=comet.get("endpoint"),
            comet_timeout=comet.get("timeout", 60.0),
            raw=json.loads(json.dumps(data)),
        )
    except ConfigError:
        raise
    except (ValueError, KeyError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Read a config file; ``None`` falls back to ``$TATI_CONFIG``."""
    if path is None:
        path = os.environ.get(ENV_VAR)
        if not path:
            raise ConfigError(f"no config given and ${ENV_VAR} is unset")
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc
    return config_from_dict(data, p.parent)
