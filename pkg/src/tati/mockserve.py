"""Scripted HTTP server speaking every backend wire contract, for offline runs."""

from __future__ import annotations

import json
import logging
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Mapping

from .core import TextBox, image_from_b64, image_to_b64
from .fusion import EraseMethod, ErasureRequest, draw_text_box, erase_regions
from .ocr import MockOcr
from .translate import MockTranslator

log = logging.getLogger(__name__)

ROUTES = ("ocr", "translate", "erase", "render", "comet")


class ScriptedBackends:
    """Answers for each route, driven by a JSON script.

    Script keys (all optional)::

        {"ocr": <MockOcr json, images keyed by id or sha256 digest>,
         "translate": <MockTranslator json>,
         "erase": {"mode": "solid_fill" | "identity"},
         "render": {"mode": "raster" | "identity"},
         "comet": {"score": 0.0},
         "fail": {"translate": 2},
         "raw": {"ocr": {"lines": "not a list"}}}

    ``fail`` makes the first N calls of a route answer HTTP 503; ``raw`` pins
    a route to a canned body, which is how malformed replies are simulated.
    """

    def __init__(self, script: Mapping[str, Any] | None = None):
        script = dict(script or {})
        self.script = script
        self.ocr = MockOcr.from_json(script.get("ocr", {}))
        self.translator = MockTranslator.from_json(script.get("translate", {}))
        self.erase_mode = script.get("erase", {}).get("mode", "solid_fill")
        self.render_mode = script.get("render", {}).get("mode", "raster")
        self.comet = script.get("comet")
        self.fail = Counter({k: int(v) for k, v in script.get("fail", {}).items()})
        self.raw = dict(script.get("raw", {}))
        self.calls: Counter = Counter()
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str | Path) -> ScriptedBackends:
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def should_fail(self, route: str) -> bool:
        with self._lock:
            self.calls[route] += 1
            if self.fail[route] > 0:
                self.fail[route] -= 1
                return True
            return False

    def handle(self, route: str, body: Mapping[str, Any]) -> tuple[int, Any]:
        if route in self.raw:
            return 200, self.raw[route]
        if route == "ocr":
            img = image_from_b64(body["image_b64"])
            return 200, {"lines": self.ocr.lookup(img, body.get("image_id"))}
        if route == "translate":
            if not isinstance(body.get("prompt"), str):
                return 400, {"error": "prompt must be a string"}
            return 200, {"text": self.translator.complete(body["prompt"])}
        if route == "erase":
            img = image_from_b64(body["image_b64"])
            regions = [TextBox.from_json(r) for r in body.get("regions", [])]
            if self.erase_mode == "solid_fill":
                img = erase_regions(ErasureRequest(img, regions, EraseMethod.SOLID_FILL))
            return 200, {"image_b64": image_to_b64(img)}
        if route == "render":
            img = image_from_b64(body["image_b64"])
            if self.render_mode == "raster":
                for job in body.get("jobs", []):
                    img = draw_text_box(img, TextBox.from_json(job["box"]), job.get("lines") or [job["text"]])
            return 200, {"image_b64": image_to_b64(img)}
        if route == "comet":
            if self.comet is None:
                return 404, {"error": "comet not scripted"}
            return 200, {"score": float(self.comet.get("score", 0.0))}
        return 404, {"error": f"unknown route {route!r}"}


def _handler_for(backends: ScriptedBackends):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            log.debug("mock-serve: " + fmt, *args)

        def _reply(self, code: int, obj: Any):
            data = json.dumps(obj, ensure_ascii=False).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            route = self.path.strip("/").split("?", 1)[0]
            if route not in ROUTES:
                self._reply(404, {"error": f"unknown route {route!r}"})
                return
            if backends.should_fail(route):
                self._reply(503, {"error": "scripted failure"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                if not isinstance(body, dict):
                    raise ValueError("body must be a JSON object")
            except (ValueError, UnicodeDecodeError) as exc:
                self._reply(400, {"error": f"bad request: {exc}"})
                return
            try:
                code, obj = backends.handle(route, body)
            except Exception as exc:  # report, keep serving
                log.exception("mock-serve %s failed", route)
                code, obj = 500, {"error": str(exc)}
            self._reply(code, obj)

    return Handler


class MockServer:
    """Threaded scripted server; usable as a context manager."""

    def __init__(self, backends: ScriptedBackends | None = None, host: str = "127.0.0.1", port: int = 0):
        self.backends = backends or ScriptedBackends()
        self.httpd = ThreadingHTTPServer((host, port), _handler_for(self.backends))
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> MockServer:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        try:
            self.httpd.serve_forever()
        finally:
            self.httpd.server_close()

    def __enter__(self) -> MockServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
