"""OpenAI-compatible chat-completions client with an append-only on-disk cache."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from pathlib import Path
from typing import Optional

import httpx

from ..core import PriorRLError, State

log = logging.getLogger(__name__)

API_KEY_ENV = "PRIOR_RL_LLM_API_KEY"


class TransportError(PriorRLError):
    """The LLM endpoint could not be reached or answered with an error."""

    def __init__(self, message: str, status: Optional[int] = None):
        self.status = status
        super().__init__(message)


def build_prompt(state: State, task: str = "") -> str:
    """Instantiate the fixed prompt template for one state."""
    lines = [f"Current observation: {state.observation}", ""]
    head = f"Your task is to: {task}. " if task else ""
    lines.append(head + "You are allowed to take the following actions: "
                 + ", ".join(a.text for a in state.admissible) + ".")
    lines.append("Please select an action from the admissible actions.")
    return "\n".join(lines)


def cache_key(model: str, prompt: str, temperature: float, draw: int) -> str:
    payload = json.dumps([model, prompt, float(temperature), int(draw)], separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CompletionCache:
    """Line-delimited JSON records ``{"key", "prompt", "completion"}``; appends only.

    Reads are lock-free dictionary lookups; writes are serialized by a lock.
    """

    def __init__(self, path: Optional[str | os.PathLike] = None):
        self.path = Path(path) if path else None
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                        self._entries[rec["key"]] = rec["completion"]
                    except (json.JSONDecodeError, KeyError, TypeError):
                        log.warning("skipping malformed cache line %d in %s", lineno, self.path)

    def get(self, key: str) -> Optional[str]:
        return self._entries.get(key)

    def put(self, key: str, prompt: str, completion: str) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = completion
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "prompt": prompt, "completion": completion},
                                        ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


class LLMClient:
    """Sends chat-completion requests; ``n`` completions come back from a single call."""

    def __init__(self, endpoint: str, model: str, temperature: float = 1.0,
                 cache_path: Optional[str] = None, timeout: float = 30.0, max_retries: int = 3,
                 backoff: float = 1.0, max_concurrency: int = 4,
                 transport: Optional[httpx.BaseTransport] = None, api_key: Optional[str] = None):
        self.url = endpoint.rstrip("/")
        if not self.url.endswith("/chat/completions"):
            self.url += "/v1/chat/completions" if not self.url.endswith("/v1") else "/chat/completions"
        self.model = model
        self.temperature = temperature
        self.cache = CompletionCache(cache_path)
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._api_key = api_key
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._http = httpx.Client(timeout=timeout, transport=transport)
        self.network_calls = 0

    def _headers(self) -> dict:
        key = self._api_key or os.environ.get(API_KEY_ENV)
        if not key:
            raise TransportError(f"environment variable {API_KEY_ENV} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def request_body(self, prompt: str, n: int) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "n": n,
        }

    def _post(self, body: dict) -> dict:
        headers = self._headers()
        for attempt in range(self.max_retries + 1):
            try:
                with self._slots:
                    self.network_calls += 1
                    resp = self._http.post(self.url, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                if attempt == self.max_retries:
                    raise TransportError(f"timed out after {attempt + 1} attempts: {exc}") from exc
                delay = self.backoff * 2 ** attempt
                log.warning("LLM request timed out; retrying in %.1fs", delay)
                time.sleep(delay)
                continue
            except httpx.HTTPError as exc:
                raise TransportError(f"request failed: {exc}") from exc
            if not 200 <= resp.status_code < 300:
                raise TransportError(f"endpoint returned HTTP {resp.status_code}: {resp.text[:200]}",
                                     status=resp.status_code)
            return resp.json()
        raise AssertionError("unreachable")

    def complete(self, prompt: str, n: int = 1, first_draw: int = 0) -> list[str]:
        """Return ``n`` completions for draw indices ``first_draw .. first_draw + n - 1``."""
        keys = [cache_key(self.model, prompt, self.temperature, first_draw + i) for i in range(n)]
        out: list[Optional[str]] = [self.cache.get(k) for k in keys]
        missing = [i for i, text in enumerate(out) if text is None]
        if missing:
            data = self._post(self.request_body(prompt, len(missing)))
            try:
                texts = [c["message"]["content"] or "" for c in data["choices"]]
            except (KeyError, TypeError) as exc:
                raise TransportError(f"malformed completion response: {exc}") from exc
            if len(texts) < len(missing):
                raise TransportError(f"asked for {len(missing)} completions, got {len(texts)}")
            for i, text in zip(missing, texts):
                out[i] = text
                self.cache.put(keys[i], prompt, text)
        return [str(t) for t in out]

    def close(self) -> None:
        self._http.close()


def llm_request(client: LLMClient, prompt: str, n: int = 1, first_draw: int = 0) -> list[str]:
    return client.complete(prompt, n=n, first_draw=first_draw)

