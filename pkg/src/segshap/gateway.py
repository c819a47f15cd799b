"""Client for an OpenAI-compatible chat completions endpoint.

Responses are cached on disk keyed by a hash of the full request parameters, so
re-running an experiment replays from cache without network traffic. Retries use
exponential backoff on rate limits, server errors, and transport failures; auth
failures surface immediately. A custom httpx transport can be injected for
offline operation.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import httpx


class GatewayError(Exception):
    pass


class AuthFailed(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class TransportFailed(GatewayError):
    pass


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    backoff_base_ms: int = 200


@dataclass(frozen=True)
class GatewayConfig:
    base_url: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 1.0
    max_tokens: int = 512
    max_concurrency: int = 4
    timeout_s: float = 60.0
    cache_dir: str | None = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)


@dataclass(frozen=True)
class CompletionOutcome:
    text: str | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def request_hash(model: str, prompt: str, temperature: float, max_tokens: int,
                 sample_index: int) -> str:
    key = json.dumps(
        {
            "model": model,
            "prompt": prompt,
            "temperature": temperature,
            "max_tokens": max_tokens,
            "sample_index": sample_index,
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(key.encode("utf-8")).hexdigest()


def stub_transport(reply: str | Callable[[str, dict], str]) -> httpx.MockTransport:
    """Transport that answers every completion with a canned or computed reply."""

    def handler(request: httpx.Request) -> httpx.Response:
        payload = json.loads(request.content)
        prompt = payload["messages"][0]["content"]
        text = reply(prompt, payload) if callable(reply) else reply
        return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})

    return httpx.MockTransport(handler)


class Gateway:
    def __init__(self, config: GatewayConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._client = httpx.Client(transport=transport, timeout=config.timeout_s)
        self._semaphore = threading.BoundedSemaphore(config.max_concurrency)
        self._sleep = sleep
        self._lock = threading.Lock()
        self.requests_sent = 0
        self.cache_hits = 0

    def close(self) -> None:
        self._client.close()

    def _cache_path(self, digest: str) -> Path | None:
        if self.config.cache_dir is None:
            return None
        return Path(self.config.cache_dir) / digest[:2] / f"{digest}.json"

    def _cache_read(self, digest: str) -> str | None:
        path = self._cache_path(digest)
        if path is None or not path.exists():
            return None
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None
        with self._lock:
            self.cache_hits += 1
        return record["response"]

    def _cache_write(self, digest: str, record: dict) -> None:
        path = self._cache_path(digest)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh, ensure_ascii=False, sort_keys=True)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def complete(self, prompt: str, sample_index: int = 0,
                 temperature: float | None = None,
                 max_tokens: int | None = None) -> str:
        """Return one completion, consulting the cache before the network."""
        cfg = self.config
        temperature = cfg.temperature if temperature is None else temperature
        max_tokens = cfg.max_tokens if max_tokens is None else max_tokens
        digest = request_hash(cfg.model, prompt, temperature, max_tokens, sample_index)

        cached = self._cache_read(digest)
        if cached is not None:
            return cached

        api_key = os.environ.get(cfg.api_key_env, "")
        if not api_key:
            raise AuthFailed(f"environment variable {cfg.api_key_env} is not set")

        payload = {
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {api_key}"}

        last_error: GatewayError | None = None
        for attempt in range(cfg.retry.max_attempts):
            if attempt:
                self._sleep(cfg.retry.backoff_base_ms / 1000.0 * 2 ** (attempt - 1))
            try:
                with self._semaphore:
                    with self._lock:
                        self.requests_sent += 1
                    response = self._client.post(url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = TransportFailed(str(exc))
                continue
            if response.status_code in (401, 403):
                raise AuthFailed(f"gateway rejected credentials ({response.status_code})")
            if response.status_code == 429:
                last_error = RateLimited("rate limited by gateway")
                continue
            if response.status_code >= 500:
                last_error = TransportFailed(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise TransportFailed(
                    f"unexpected status {response.status_code}: {response.text[:200]}")
            try:
                text = response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                raise TransportFailed(f"malformed completion payload: {exc}") from exc
            self._cache_write(digest, {
                "request_hash": digest,
                "model": cfg.model,
                "prompt": prompt,
                "sample_index": sample_index,
                "temperature": temperature,
                "max_tokens": max_tokens,
                "response": text,
            })
            return text
        assert last_error is not None
        raise last_error

    def batch_complete(self, items: list[tuple[str, int]],
                       temperature: float | None = None,
                       max_tokens: int | None = None) -> list[CompletionOutcome]:
        """Run (prompt, sample_index) requests concurrently, preserving order.

        Failures come back as per-item outcomes rather than aborting the batch.
        """

        def run(item: tuple[str, int]) -> CompletionOutcome:
            prompt, sample_index = item
            try:
                return CompletionOutcome(self.complete(
                    prompt, sample_index, temperature=temperature, max_tokens=max_tokens))
            except GatewayError as exc:
                return CompletionOutcome(None, error=f"{type(exc).__name__}: {exc}")

        if not items:
            return []
        with ThreadPoolExecutor(max_workers=self.config.max_concurrency) as pool:
            return list(pool.map(run, items))
