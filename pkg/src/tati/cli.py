"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import ENV_VAR, PipelineConfig, load_config
from .core import TextBox, load_image, save_png
from .errors import ConfigError, StageError, TatiError
from .evalkit import echo_ocr, evaluate, format_table, load_mtit6
from .fusion import EraseMethod, ErasureRequest, erase_regions, render_text
from .layout import FusionPlan
from .mockserve import MockServer, ScriptedBackends
from .ocr import run_ocr
from .pipeline import dumps_tagged, run_pipeline
from .prompting import LanguagePair

log = logging.getLogger("tati")

EXIT_OK, EXIT_USAGE, EXIT_STAGE = 0, 1, 2
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tif", ".tiff"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tati", description="Translate the text inside images and draw it back in place.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("translate", help="run the full pipeline on an image or a directory")
    t.add_argument("--input", required=True, help="image file or directory of images")
    t.add_argument("--pair", help="language pair such as zh-en (overrides the config)")
    t.add_argument("--config", help=f"JSON config (default: ${ENV_VAR})")
    t.add_argument("--out", default="tati_out", help="output directory")
    t.add_argument("--dump-plan", action="store_true", help="write <name>.plan.json")
    t.add_argument("--dump-tagged", action="store_true", help="write <name>.tagged.json")

    e = sub.add_parser("eval", help="score a dataset in the MTIT6 layout")
    e.add_argument("--dataset", required=True)
    e.add_argument("--pair", required=True)
    e.add_argument("--config")
    e.add_argument("--i2i", action="store_true", help="also re-recognize final images")
    e.add_argument("--echo-ocr", action="store_true", help="I2I reads back exactly what was drawn")
    e.add_argument("--label", default="", help="model name for the report table")
    e.add_argument("--report", help="write the JSON report here")

    m = sub.add_parser("mock-serve", help="serve scripted backends over HTTP")
    m.add_argument("--port", type=int, required=True)
    m.add_argument("--script", required=True)
    m.add_argument("--host", default="127.0.0.1")

    r = sub.add_parser("erase", help="erase text regions of one image")
    r.add_argument("--input", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--boxes", help="JSON list of boxes; without it the configured OCR finds them")
    r.add_argument("--method", choices=[m.value for m in EraseMethod])
    r.add_argument("--config")

    d = sub.add_parser("render", help="draw a dumped plan onto an image")
    d.add_argument("--input", required=True)
    d.add_argument("--plan", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--config")
    return p


def _config(path: str | None, required: bool = True) -> PipelineConfig:
    if path is None and not required:
        try:
            return load_config(None)
        except ConfigError:
            return PipelineConfig()
    return load_config(path)


def _inputs(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
        if not files:
            raise ConfigError(f"no images in {path}")
        return files
    if not path.is_file():
        raise ConfigError(f"input {path} does not exist")
    return [path]


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def cmd_translate(args) -> int:
    cfg = _config(args.config)
    pair = LanguagePair.parse(args.pair) if args.pair else cfg.pair
    if pair is None:
        raise ConfigError("no language pair: pass --pair or set 'pair' in the config")
    files = _inputs(Path(args.input))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_plan = args.dump_plan or cfg.dump_plan
    dump_tagged = args.dump_tagged or cfg.dump_tagged

    def one(path: Path):
        return run_pipeline(load_image(path), cfg, pair, path.stem)

    if cfg.parallelism > 1 and len(files) > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            results = list(pool.map(one, files))
    else:
        results = [one(f) for f in files]
    for path, res in zip(files, results):
        save_png(res.final_image, out / f"{path.stem}.png")
        if dump_plan:
            _write(out / f"{path.stem}.plan.json", res.plan.dumps())
        if dump_tagged:
            _write(out / f"{path.stem}.tagged.json", dumps_tagged(res))
        note = " (no text found)" if res.no_text_found else ""
        print(f"{path.name}: {len(res.plan.entries)} lines{note}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args.config)
    pair = LanguagePair.parse(args.pair)
    records = load_mtit6(args.dataset, pair)
    if not records:
        raise ConfigError(f"dataset has no {pair} records")
    run = evaluate(records, cfg, with_i2i=args.i2i and not args.echo_ocr, label=args.label)
    if args.i2i and args.echo_ocr:
        run = evaluate(records, cfg, with_i2i=True, ocr_backend=echo_ocr(run.plans), label=args.label)
    sys.stdout.write(format_table([run.report]))
    if args.report:
        _write(Path(args.report), json.dumps(run.report.to_json(), ensure_ascii=False, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_mock_serve(args) -> int:
    server = MockServer(ScriptedBackends.load(args.script), args.host, args.port)
    print(f"serving on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def _read_boxes(path: str) -> list[TextBox]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = [ln["box"] for ln in data.get("lines", [])]
    return [TextBox.from_json(b["box"] if isinstance(b, dict) else b) for b in data]


def cmd_erase(args) -> int:
    cfg = _config(args.config, required=False)
    image = load_image(args.input)
    try:
        boxes = _read_boxes(args.boxes) if args.boxes else [ln.box for ln in run_ocr(image, cfg.ocr, Path(args.input).stem)]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read boxes: {exc}") from exc
    method = EraseMethod(args.method) if args.method else cfg.eraser.method
    try:
        result = erase_regions(ErasureRequest(image, boxes, method), cfg.eraser)
    except (TatiError, ValueError) as exc:
        raise StageError("erase", exc) from exc
    save_png(result, args.out)
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = _config(args.config, required=False)
    image = load_image(args.input)
    try:
        plan = FusionPlan.loads(Path(args.plan).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read plan: {exc}") from exc
    try:
        result = render_text(image, plan, cfg.renderer)
    except TatiError as exc:
        raise StageError("render", exc) from exc
    save_png(result, args.out)
    return EXIT_OK


COMMANDS = {
    "translate": cmd_translate,
    "eval": cmd_eval,
    "mock-serve": cmd_mock_serve,
    "erase": cmd_erase,
    "render": cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error: stage '{exc.stage}' failed: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TatiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
