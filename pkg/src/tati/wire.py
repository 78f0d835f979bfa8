"""JSON-over-HTTP client shared by the remote backends."""

from __future__ import annotations

import json
import logging
import urllib.error
import urllib.request
from typing import Any

from .errors import BackendMalformed, BackendUnreachable

log = logging.getLogger(__name__)

RETRIES = 2


def post_json(endpoint: str, route: str, payload: dict, timeout: float, retries: int = RETRIES) -> Any:
    """POST ``payload`` to ``{endpoint}/{route}`` and decode the JSON reply.

    Transport failures are retried ``retries`` times, doubling the timeout
    each time, then surface as BackendUnreachable. A reply that is not JSON
    raises BackendMalformed immediately.
    """
    url = endpoint.rstrip("/") + "/" + route.lstrip("/")
    body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
    wait = float(timeout)
    last_exc: Exception | None = None
    for attempt in range(retries + 1):
        req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=wait) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as exc:
            raw_err = exc.read()
            if 400 <= exc.code < 500:
                raise BackendMalformed(f"{url} rejected request with HTTP {exc.code}", raw_err) from exc
            last_exc = exc
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            last_exc = exc
        else:
            try:
                return json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise BackendMalformed(f"{url} returned non-JSON body", raw) from exc
        log.warning("POST %s failed (attempt %d/%d): %s", url, attempt + 1, retries + 1, last_exc)
        wait *= 2
    raise BackendUnreachable(f"{url} unreachable after {retries + 1} attempts: {last_exc}", str(last_exc))
