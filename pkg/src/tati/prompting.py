"""Few-shot prompt assembly for tagged translation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

import jsonschema

from .boxtag import ParseStatus, TaggedSequence, count_boxes, parse_tagged
from .errors import InsufficientDemos

SUPPORTED_LANGS = ("zh", "en", "ko", "ja")
LANG_NAMES = {"zh": "Chinese", "en": "English", "ko": "Korean", "ja": "Japanese"}
PLACEHOLDERS = ("src_lang", "tgt_lang", "demos", "input")
_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")


@dataclass(frozen=True)
class LanguagePair:
    src: str
    tgt: str

    def __post_init__(self):
        for code in (self.src, self.tgt):
            if code not in SUPPORTED_LANGS:
                raise ValueError(f"unsupported language {code!r}; expected one of {SUPPORTED_LANGS}")
        if self.src == self.tgt:
            raise ValueError(f"source and target are both {self.src!r}")

    @classmethod
    def parse(cls, text: str) -> LanguagePair:
        parts = re.split(r"-|→|->|2", text.strip(), maxsplit=1)
        if len(parts) != 2:
            raise ValueError(f"cannot parse language pair {text!r}; use e.g. 'zh-en'")
        return cls(parts[0].strip(), parts[1].strip())

    def __str__(self) -> str:
        return f"{self.src}-{self.tgt}"


@dataclass(frozen=True)
class Demonstration:
    pair: LanguagePair
    source_tagged: str
    target_tagged: str
    note: str | None = None

    def __post_init__(self):
        n = count_boxes(self.source_tagged)
        src = parse_tagged(self.source_tagged, n, strict=True)
        tgt = parse_tagged(self.target_tagged, n, strict=True)
        if src.status is not ParseStatus.CLEAN or tgt.status is not ParseStatus.CLEAN:
            raise ValueError(f"{self.pair} demonstration is not canonical: {self.source_tagged!r}")


@dataclass(frozen=True)
class PromptTemplate:
    instruction_text: str
    shots: int = 5

    def __post_init__(self):
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        for name in PLACEHOLDERS:
            count = self.instruction_text.count("{" + name + "}")
            if count != 1:
                raise ValueError(f"template must contain {{{name}}} exactly once, found {count}")

    @classmethod
    def default(cls, shots: int = 5) -> PromptTemplate:
        text = resources.files("tati").joinpath("data", "instruction.txt").read_text(encoding="utf-8")
        return cls(text, shots)

    @classmethod
    def from_file(cls, path: str | Path, shots: int = 5) -> PromptTemplate:
        return cls(Path(path).read_text(encoding="utf-8"), shots)


STORE_SCHEMA = {
    "type": "object",
    "required": ["pair", "demos"],
    "properties": {
        "pair": {"type": "string"},
        "demos": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["src", "tgt"],
                "properties": {
                    "src": {"type": "string"},
                    "tgt": {"type": "string"},
                    "note": {"type": "string"},
                },
            },
        },
    },
}


class DemoStore:
    """Read-only demonstrations keyed by language pair, in file order."""

    def __init__(self, demos: Mapping[LanguagePair, list[Demonstration]], version: str | int | None = None):
        self._demos = {k: tuple(v) for k, v in demos.items()}
        self.version = version

    def get(self, pair: LanguagePair) -> tuple[Demonstration, ...]:
        return self._demos.get(pair, ())

    def pairs(self) -> list[LanguagePair]:
        return list(self._demos)

    @classmethod
    def from_json(cls, data) -> DemoStore:
        """Accepts one pair object, a list of them, or ``{"version", "pairs": [...]}``."""
        version = None
        if isinstance(data, dict) and "pairs" in data:
            version = data.get("version")
            entries = data["pairs"]
        elif isinstance(data, list):
            entries = data
        else:
            entries = [data]
        demos: dict[LanguagePair, list[Demonstration]] = {}
        for entry in entries:
            jsonschema.validate(entry, STORE_SCHEMA)
            pair = LanguagePair.parse(entry["pair"])
            bucket = demos.setdefault(pair, [])
            for d in entry["demos"]:
                bucket.append(Demonstration(pair, d["src"], d["tgt"], d.get("note")))
        return cls(demos, version)

    @classmethod
    def load(cls, path: str | Path) -> DemoStore:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def bundled(cls) -> DemoStore:
        text = resources.files("tati").joinpath("data", "demos.json").read_text(encoding="utf-8")
        return cls.from_json(json.loads(text))


def format_demos(pair: LanguagePair, demos) -> str:
    blocks = []
    for k, d in enumerate(demos, 1):
        blocks.append(f"Example {k}:\nInput:\n{d.source_tagged}\nOutput:\n{d.target_tagged}\n")
    return "\n".join(blocks)


def build_prompt(
    pair: LanguagePair,
    source: TaggedSequence | str,
    store: DemoStore,
    template: PromptTemplate,
) -> str:
    demos = store.get(pair)
    if len(demos) < template.shots:
        raise InsufficientDemos(pair, len(demos), template.shots)
    demo_block = format_demos(pair, demos[: template.shots]) if template.shots else ""
    values = {
        "src_lang": LANG_NAMES[pair.src],
        "tgt_lang": LANG_NAMES[pair.tgt],
        "demos": demo_block,
        "input": str(source),
    }
    # single pass over the template, so substituted text is never rescanned
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template.instruction_text)


def extract_input(prompt: str) -> str:
    """Recover the tagged input from a prompt built with the bundled template.

    Used by mock translators that only see the prompt text.
    """
    head, sep, tail = prompt.rpartition("\nInput:\n")
    if not sep:
        if prompt.startswith("Input:\n"):
            tail = prompt[len("Input:\n"):]
        else:
            return prompt
    body, sep, _ = tail.partition("\nOutput:")
    return body
