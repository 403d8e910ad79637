"""Chat-completions client with record/replay cassettes.

Cassette files are JSON lines, one exchange per line, appended as they
happen::

    {"digest": ..., "request": {"model_id", "spec_digest", "temperature",
     "max_tokens", "messages"}, "response": {"text", "finish_reason",
     "latency_ms", "token_usage"}}

A later line for the same digest wins.  ``replay`` never touches the network,
``record`` serves known digests from the file and records the rest,
``passthrough`` neither reads nor writes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import requests

from .prompts import RenderedPrompt

log = logging.getLogger(__name__)

MODES = ("record", "replay", "passthrough")
RETRY_STATUS = {408, 425, 429, 500, 502, 503, 504}


class CassetteMiss(KeyError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(digest)

    def __str__(self):
        return f"no cassette entry for request {self.digest}"


class TransportError(RuntimeError):
    pass


class ProviderRefusal(RuntimeError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"provider returned HTTP {status}: {body[:500]}")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    prompt: RenderedPrompt
    temperature: float = 0.0
    max_tokens: int = 2048

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    @property
    def request_digest(self) -> str:
        key = {
            "model_id": self.model_id,
            "spec_digest": self.prompt.spec_digest,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()

    def messages(self) -> list[dict]:
        msgs = []
        if self.prompt.system:
            msgs.append({"role": "system", "content": self.prompt.system})
        msgs.append({"role": "user", "content": self.prompt.text})
        return msgs

    def snapshot(self) -> dict:
        return {
            "model_id": self.model_id,
            "spec_digest": self.prompt.spec_digest,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": self.messages(),
        }


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"
    latency_ms: float = 0.0
    token_usage: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ChatResponse":
        return cls(
            text=data["text"],
            finish_reason=data.get("finish_reason", "stop"),
            latency_ms=data.get("latency_ms", 0.0),
            token_usage=dict(data.get("token_usage") or {}),
        )


class Cassette:
    def __init__(self, path: str | Path | None, mode: str = "replay"):
        if mode not in MODES:
            raise ValueError(f"cassette mode must be one of {MODES}")
        if mode != "passthrough" and path is None:
            raise ValueError(f"{mode} mode needs a cassette path")
        self.path = Path(path) if path else None
        self.mode = mode
        self.entries: dict[str, ChatResponse] = {}
        self._lock = threading.Lock()
        if self.path and mode != "passthrough" and self.path.exists():
            for n, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    self.entries[rec["digest"]] = ChatResponse.from_json(rec["response"])
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"{self.path}:{n}: bad cassette record ({exc})") from exc

    def __contains__(self, digest: str) -> bool:
        return digest in self.entries

    def __len__(self):
        return len(self.entries)

    def get(self, digest: str) -> ChatResponse | None:
        return self.entries.get(digest)

    def store(self, req: ChatRequest, resp: ChatResponse) -> None:
        if self.mode != "record":
            return
        rec = {"digest": req.request_digest, "request": req.snapshot(), "response": resp.to_json()}
        with self._lock:
            self.entries[req.request_digest] = resp
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


class ChatClient:
    """Shareable across threads; at most ``max_in_flight`` requests are open at once."""

    def __init__(
        self,
        api_base: str | None = None,
        api_key: str | None = None,
        *,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        max_in_flight: int = 4,
        session: requests.Session | None = None,
    ):
        self.api_base = (api_base or os.environ.get("LLM_API_BASE") or "").rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY")
        self.timeout = timeout
        self.max_attempts = max(1, max_attempts)
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))
        self._session = session
        self._local = threading.local()

    def _http(self) -> requests.Session:
        if self._session is not None:
            return self._session
        s = getattr(self._local, "session", None)
        if s is None:
            s = self._local.session = requests.Session()
        return s

    def complete(self, req: ChatRequest, cassette: Cassette | None = None) -> ChatResponse:
        if cassette is not None and cassette.mode != "passthrough":
            hit = cassette.get(req.request_digest)
            if hit is not None:
                return hit
            if cassette.mode == "replay":
                raise CassetteMiss(req.request_digest)
        resp = self._call(req)
        if cassette is not None:
            cassette.store(req, resp)
        return resp

    def _call(self, req: ChatRequest) -> ChatResponse:
        if not self.api_base:
            raise TransportError("no API base configured (set LLM_API_BASE)")
        url = self.api_base + "/chat/completions"
        payload = {
            "model": req.model_id,
            "messages": req.messages(),
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            t0 = time.monotonic()
            try:
                with self._slots:
                    r = self._http().post(url, json=payload, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last = TransportError(f"{type(exc).__name__}: {exc}")
                log.warning("chat request failed (attempt %d): %s", attempt + 1, exc)
                continue
            latency = (time.monotonic() - t0) * 1000.0
            if r.status_code in RETRY_STATUS:
                last = TransportError(f"HTTP {r.status_code}: {r.text[:300]}")
                log.warning("chat request got HTTP %d (attempt %d)", r.status_code, attempt + 1)
                continue
            if not 200 <= r.status_code < 300:
                raise ProviderRefusal(r.status_code, r.text)
            return _parse_completion(r, latency)
        raise last if last else TransportError("request failed")


def _parse_completion(r: requests.Response, latency_ms: float) -> ChatResponse:
    try:
        data = r.json()
        choice = data["choices"][0]
        text = choice["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ProviderRefusal(r.status_code, f"unexpected completion payload: {r.text[:500]}") from exc
    return ChatResponse(
        text=text if text is not None else "",
        finish_reason=choice.get("finish_reason") or "stop",
        latency_ms=round(latency_ms, 3),
        token_usage={k: v for k, v in (data.get("usage") or {}).items() if isinstance(v, int)},
    )


def batch_complete(
    client: ChatClient,
    reqs: list[ChatRequest],
    cassette: Cassette | None = None,
    parallelism: int = 4,
) -> list[ChatResponse | Exception]:
    """Responses in request order; a failed item holds its exception."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(req):
        try:
            return client.complete(req, cassette)
        except (CassetteMiss, TransportError, ProviderRefusal) as exc:
            return exc

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, reqs))
