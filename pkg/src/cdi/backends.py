"""Chat-completion backends and record/replay cassettes.

A backend is anything with ``complete(prompt, sample=0) -> str``. The
``sample`` index distinguishes repeated draws of the same prompt, so a
cassette can hold N recorded answers to one prompt.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx

from .errors import BackendError, CassetteMiss, DocumentError

log = logging.getLogger(__name__)

API_KEY_ENV = "CDI_API_KEY"
FALLBACK_API_KEY_ENV = "OPENAI_API_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "o1-mini"


class Backend(Protocol):
    def complete(self, prompt: str, sample: int = 0) -> str: ...


def request_digest(prompt: str, sample: int = 0) -> str:
    payload = json.dumps({"prompt": prompt, "sample": sample}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 1.0
    max_delay: float = 30.0

    def delay(self, attempt: int) -> float:
        return min(self.max_delay, self.base_delay * 2**attempt)


@dataclass
class ChatBackend:
    """Client for a JSON chat-completions endpoint (``POST {base_url}/chat/completions``).

    Transport errors, 429 and 5xx responses are retried with exponential
    backoff. Temperature defaults to ``None`` (omitted from the request):
    the sampling settings behind published results are unknown, so nothing
    is assumed.
    """

    base_url: str = DEFAULT_BASE_URL
    model: str = DEFAULT_MODEL
    temperature: float | None = None
    timeout: float = 120.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    api_key: str | None = field(default=None, repr=False)
    transport: httpx.BaseTransport | None = field(default=None, repr=False)
    sleep: object = field(default=time.sleep, repr=False)

    def _key(self) -> str | None:
        return self.api_key or os.environ.get(API_KEY_ENV) or os.environ.get(FALLBACK_API_KEY_ENV)

    def _payload(self, prompt: str) -> dict:
        body = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        if self.temperature is not None:
            body["temperature"] = self.temperature
        return body

    def complete(self, prompt: str, sample: int = 0) -> str:
        headers = {"Content-Type": "application/json"}
        key = self._key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = self.base_url.rstrip("/") + "/chat/completions"
        last = None
        with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
            for attempt in range(self.retry.attempts):
                try:
                    resp = client.post(url, headers=headers, json=self._payload(prompt))
                except httpx.TransportError as exc:
                    last = f"transport error: {exc}"
                else:
                    if resp.status_code == 429 or resp.status_code >= 500:
                        last = f"HTTP {resp.status_code}"
                    elif resp.status_code >= 400:
                        raise BackendError(f"HTTP {resp.status_code} from {url}", raw=resp.text)
                    else:
                        return _extract_content(resp)
                log.warning("chat request attempt %d/%d failed: %s", attempt + 1, self.retry.attempts, last)
                if attempt + 1 < self.retry.attempts:
                    self.sleep(self.retry.delay(attempt))
        raise BackendError(f"request failed after {self.retry.attempts} attempts: {last}")


def _extract_content(resp: httpx.Response) -> str:
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"unexpected response body: {exc}", raw=resp.text) from exc
    if not isinstance(content, str):
        raise BackendError("response content is not text", raw=resp.text)
    return content


@dataclass
class Cassette:
    """Ordered request-digest -> response log, stored as JSON."""

    entries: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self._index = {}
        for i, e in enumerate(self.entries):
            if e["digest"] in self._index:
                raise DocumentError(f"duplicate cassette digest {e['digest'][:12]}")
            self._index[e["digest"]] = i

    def __len__(self):
        return len(self.entries)

    def lookup(self, digest: str) -> str | None:
        i = self._index.get(digest)
        return None if i is None else self.entries[i]["response"]

    def append(self, digest: str, response: str, **meta) -> None:
        if digest in self._index:
            raise DocumentError(f"digest {digest[:12]} already recorded")
        self._index[digest] = len(self.entries)
        self.entries.append({"digest": digest, "response": response, **meta})

    def record(self, digest: str, response: str, **meta) -> None:
        """Append, or overwrite the entry for a digest recorded earlier."""
        if digest in self._index:
            self.entries[self._index[digest]] = {"digest": digest, "response": response, **meta}
        else:
            self.append(digest, response, **meta)

    def dumps(self) -> str:
        return json.dumps({"entries": self.entries}, indent=2, ensure_ascii=False) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Cassette":
        try:
            doc = json.loads(text)
            entries = doc["entries"]
            for e in entries:
                if not isinstance(e.get("digest"), str) or not isinstance(e.get("response"), str):
                    raise KeyError("digest/response")
        except (ValueError, KeyError, TypeError) as exc:
            raise DocumentError(f"malformed cassette: {exc}") from exc
        return cls(list(entries))

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


class ReplayBackend:
    """Answers strictly from a cassette; a missing entry is an error."""

    def __init__(self, cassette: Cassette):
        self.cassette = cassette

    def complete(self, prompt: str, sample: int = 0) -> str:
        hit = self.cassette.lookup(request_digest(prompt, sample))
        if hit is None:
            raise CassetteMiss(f"no cassette entry for sample {sample} of this prompt")
        return hit


class RecordingBackend:
    """Forwards to ``inner`` and appends every answer to ``cassette``."""

    def __init__(self, inner: Backend, cassette: Cassette, path: str | Path | None = None):
        self.inner = inner
        self.cassette = cassette
        self.path = path
        self._lock = threading.Lock()

    def complete(self, prompt: str, sample: int = 0) -> str:
        response = self.inner.complete(prompt, sample)
        with self._lock:
            self.cassette.record(request_digest(prompt, sample), response, sample=sample)
            if self.path is not None:
                self.cassette.save(self.path)
        return response
