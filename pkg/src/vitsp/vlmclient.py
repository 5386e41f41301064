"""Transport to chat-completion multimodal APIs, plus offline replay clients.

All clients expose ``complete(text, image_png) -> str``. The replay client is
the default in tests; nothing here touches the network unless an HttpClient
is constructed explicitly.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field

import requests

log = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "VITSP_API_KEY"
DEFAULT_URL_ENV = "VITSP_API_URL"


class ClientError(RuntimeError):
    pass


class ConfigError(ClientError):
    """Missing key or endpoint."""


class PermanentClientError(ClientError):
    """4xx response; retrying will not help."""


class TransientClientError(ClientError):
    """Timeouts or 5xx/429 after the retry budget."""


class ReplayError(ClientError):
    """Replay script and live prompts diverged."""


@dataclass(frozen=True)
class ClientConfig:
    endpoint: str = ""
    model: str = "gpt-4.1"
    api_key_env: str = DEFAULT_KEY_ENV
    max_tokens: int = 100
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_s: float = 1.0

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


def prompt_digest(text: str, image: bytes) -> str:
    """Stable identity of one request: sha256 over prompt text and image bytes."""
    h = hashlib.sha256()
    h.update(text.encode("utf-8"))
    h.update(b"\x00")
    h.update(image or b"")
    return h.hexdigest()


def request_body(cfg: ClientConfig, text: str, image: bytes) -> dict:
    """Chat-completions payload: one text part and one inline PNG part."""
    content: list[dict] = [{"type": "text", "text": text}]
    if image:
        encoded = base64.b64encode(image).decode("ascii")
        content.append({
            "type": "image_url",
            "image_url": {"url": f"data:image/png;base64,{encoded}"},
        })
    return {
        "model": cfg.model,
        "max_tokens": cfg.max_tokens,
        "messages": [{"role": "user", "content": content}],
    }


def complete(cfg: ClientConfig, text: str, image: bytes = b"") -> str:
    """Single completion with exponential backoff on transient failures.

    The API key is read from the configured environment variable and never
    logged.
    """
    key = os.environ.get(cfg.api_key_env, "")
    if not key:
        raise ConfigError(f"environment variable {cfg.api_key_env} is not set")
    endpoint = cfg.endpoint or os.environ.get(DEFAULT_URL_ENV, "")
    if not endpoint:
        raise ConfigError(f"no endpoint configured (set {DEFAULT_URL_ENV} or ClientConfig.endpoint)")
    body = request_body(cfg, text, image)
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    last: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        if attempt:
            time.sleep(cfg.backoff_s * 2 ** (attempt - 1))
        try:
            resp = requests.post(endpoint, headers=headers, data=json.dumps(body),
                                 timeout=cfg.timeout_s)
        except (requests.Timeout, requests.ConnectionError) as exc:
            log.warning("transport failure (attempt %d): %s", attempt + 1, type(exc).__name__)
            last = exc
            continue
        if resp.status_code == 200:
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise PermanentClientError(f"malformed completion payload: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            log.warning("retryable HTTP %d (attempt %d)", resp.status_code, attempt + 1)
            last = TransientClientError(f"HTTP {resp.status_code}")
            continue
        raise PermanentClientError(f"HTTP {resp.status_code}: {resp.text[:300]}")
    raise TransientClientError(f"gave up after {cfg.max_retries + 1} attempts: {last}")


class HttpClient:
    """Stateful wrapper binding a ClientConfig to the selector interface."""

    def __init__(self, cfg: ClientConfig):
        self.cfg = cfg

    def complete(self, text: str, image: bytes = b"") -> str:
        return complete(self.cfg, text, image)


@dataclass
class ReplayClient:
    """Scripted responses consumed in order, keyed by prompt digest."""

    entries: list[dict]
    at: int = 0
    match_digest: bool = True

    @classmethod
    def from_file(cls, path, match_digest: bool = True) -> "ReplayClient":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh), match_digest=match_digest)

    def complete(self, text: str, image: bytes = b"") -> str:
        if self.at >= len(self.entries):
            raise ReplayError(f"replay script exhausted after {len(self.entries)} prompts")
        entry = self.entries[self.at]
        if self.match_digest:
            got = prompt_digest(text, image)
            if got != entry["digest"]:
                raise ReplayError(
                    f"prompt {self.at} diverged from the recorded run: "
                    f"expected {entry['digest'][:12]}, got {got[:12]}")
        self.at += 1
        return entry["response"]


@dataclass
class RecordingClient:
    """Wraps another client and captures (digest, response) pairs in order."""

    inner: object
    recorded: list[dict] = field(default_factory=list)

    def complete(self, text: str, image: bytes = b"") -> str:
        response = self.inner.complete(text, image)
        self.recorded.append({"digest": prompt_digest(text, image), "response": response})
        return response

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.recorded, fh, indent=1)
