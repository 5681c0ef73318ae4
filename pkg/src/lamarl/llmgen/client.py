"""Chat-completion clients: HTTP, fixture-backed stub, and scripted replies."""
from __future__ import annotations

import logging
import os
import re
import threading
import time
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import requests

log = logging.getLogger(__name__)

URL_ENV = "LAMARL_LLM_URL"
KEY_ENV = "LAMARL_LLM_KEY"
MODEL_ENV = "LAMARL_LLM_MODEL"
DEFAULT_MODEL = "o1-preview"
FIXTURES_DIR = Path(__file__).parent / "fixtures"

STEP_MARKER = re.compile(r"\[step:([a-z_]+)\]")


class LLMError(RuntimeError):
    pass


class LLMConfigError(LLMError):
    pass


class LLMAuthError(LLMError):
    pass


class LLMTimeout(LLMError):
    pass


class LLMTransportError(LLMError):
    pass


class LLMMalformedResponse(LLMError):
    pass


def step_of(messages: Sequence[dict]) -> Optional[str]:
    """The pipeline step named by the last ``[step:...]`` marker in the messages."""
    found = None
    for msg in messages:
        for m in STEP_MARKER.finditer(msg.get("content", "")):
            found = m.group(1)
    return found


class HttpClient:
    """POSTs ``{model, messages, temperature, max_tokens}`` and reads ``choices[0].message.content``.

    Transient failures (connection errors, timeouts, HTTP 429 and 5xx) are retried
    up to ``max_retries`` times with exponential backoff.
    """

    RETRY_STATUS = {429, 500, 502, 503, 504}

    def __init__(
        self,
        url: Optional[str] = None,
        key: Optional[str] = None,
        model: Optional[str] = None,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
        session: Optional[requests.Session] = None,
    ):
        self.url = url or os.environ.get(URL_ENV, "")
        self.key = key or os.environ.get(KEY_ENV, "")
        if not self.url:
            raise LLMConfigError(f"no endpoint configured: set {URL_ENV}")
        if not self.key:
            raise LLMConfigError(f"no credential configured: set {KEY_ENV}")
        self.model_id = model or os.environ.get(MODEL_ENV, DEFAULT_MODEL)
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleep = sleep
        self.session = session or requests.Session()

    def complete(self, messages: Sequence[dict], temperature: float = 0.0, max_tokens: int = 4096) -> str:
        body = {"model": self.model_id, "messages": list(messages), "temperature": temperature, "max_tokens": max_tokens}
        headers = {"Authorization": f"Bearer {self.key}"}
        for attempt in range(self.max_retries + 1):
            last = attempt == self.max_retries
            try:
                resp = self.session.post(self.url, json=body, headers=headers, timeout=self.timeout)
            except requests.Timeout as exc:
                log.warning("LLM request timed out (attempt %d)", attempt + 1)
                if last:
                    raise LLMTimeout(f"no reply within {self.timeout}s after {attempt + 1} attempts") from exc
            except requests.ConnectionError as exc:
                log.warning("LLM connection failed (attempt %d): %s", attempt + 1, exc)
                if last:
                    raise LLMTransportError(f"connection failed after {attempt + 1} attempts: {exc}") from exc
            else:
                log.info("LLM reply HTTP %d (attempt %d)", resp.status_code, attempt + 1)
                if resp.status_code in (401, 403):
                    raise LLMAuthError(f"endpoint rejected the credential (HTTP {resp.status_code})")
                if resp.status_code in self.RETRY_STATUS:
                    if last:
                        raise LLMTransportError(f"HTTP {resp.status_code} after {attempt + 1} attempts")
                elif resp.status_code != 200:
                    raise LLMTransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    return self._content(resp)
            self.sleep(self.backoff * 2**attempt)
        raise AssertionError("unreachable")

    @staticmethod
    def _content(resp: requests.Response) -> str:
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LLMMalformedResponse(f"unexpected reply body: {resp.text[:200]!r}") from exc
        if not isinstance(content, str):
            raise LLMMalformedResponse(f"reply content is {type(content).__name__}, not text")
        return content


class StubClient:
    """Answers each pipeline step with ``<fixtures>/<step>.txt``."""

    model_id = "stub"

    def __init__(self, fixture_dir: Union[str, Path] = FIXTURES_DIR, model_id: str = "stub"):
        self.fixture_dir = Path(fixture_dir)
        self.model_id = model_id
        if not self.fixture_dir.is_dir():
            raise LLMConfigError(f"fixture directory {self.fixture_dir} does not exist")

    def complete(self, messages: Sequence[dict], temperature: float = 0.0, max_tokens: int = 4096) -> str:
        step = step_of(messages)
        if step is None:
            raise LLMError("stub client needs a [step:...] marker in the prompt")
        path = self.fixture_dir / f"{step}.txt"
        if not path.exists():
            raise LLMError(f"no stub fixture for step {step!r} in {self.fixture_dir}")
        return path.read_text(encoding="utf-8")


class ScriptedClient:
    """Returns the given replies in order, one per call (thread-safe)."""

    def __init__(self, replies: Iterable[str], model_id: str = "scripted"):
        self.replies = list(replies)
        self.model_id = model_id
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, messages: Sequence[dict], temperature: float = 0.0, max_tokens: int = 4096) -> str:
        with self._lock:
            if self.calls >= len(self.replies):
                raise LLMError(f"scripted client exhausted after {self.calls} replies")
            reply = self.replies[self.calls]
            self.calls += 1
        return reply
