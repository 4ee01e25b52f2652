"""LLM backends: a deterministic mock and a chat-completion HTTP client."""
from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Protocol

import httpx

logger = logging.getLogger(__name__)

DEFAULT_TOKEN_ENV = "GAZEMIND_API_KEY"


class BackendError(RuntimeError):
    """The backend failed after exhausting retries."""


class AuthError(BackendError):
    """Credentials missing or rejected; never retried."""


class MockContext(Protocol):
    def mock_response(self) -> str: ...


class LLMBackend(Protocol):
    name: str

    def complete(self, system: str, user: str, *, temperature: float = 0.0, context=None) -> str: ...


@dataclass(frozen=True)
class Completion:
    text: str
    latency: float
    backend: str


class MockBackend:
    """Answers from the structured request context instead of the prompt text.

    Stateless, so it can be shared between threads.
    """

    name = "mock"

    def complete(self, system: str, user: str, *, temperature: float = 0.0, context=None) -> str:
        if context is None or not hasattr(context, "mock_response"):
            raise BackendError("mock backend needs a request context with mock_response()")
        return context.mock_response()


class ChatCompletionBackend:
    """Client for an OpenAI-style ``/chat/completions`` endpoint.

    The bearer token is read from the environment variable named by
    ``token_env`` at construction time.
    """

    name = "remote"

    def __init__(
        self,
        base_url: str,
        model: str,
        token_env: str = DEFAULT_TOKEN_ENV,
        timeout: float = 30.0,
        max_retries: int = 2,
        max_in_flight: int = 4,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ):
        token = os.environ.get(token_env)
        if not token:
            raise AuthError(f"environment variable {token_env} is not set")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.max_retries = max_retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(
            base_url=self.base_url,
            timeout=timeout,
            headers={"Authorization": f"Bearer {token}"},
            transport=transport,
        )

    def _post(self, payload: dict) -> str:
        resp = self._client.post("/chat/completions", json=payload)
        if resp.status_code in (401, 403):
            raise AuthError(f"backend rejected credentials (HTTP {resp.status_code})")
        resp.raise_for_status()
        data = resp.json()
        choices = data.get("choices") or []
        if not choices:
            raise BackendError("backend returned no choices")
        return (choices[0].get("message") or {}).get("content") or ""

    def complete(self, system: str, user: str, *, temperature: float = 0.0, context=None) -> str:
        payload = {
            "model": self.model,
            "temperature": temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        last_exc: Exception | None = None
        with self._slots:
            for attempt in range(self.max_retries + 1):
                try:
                    return self._post(payload)
                except AuthError:
                    raise
                except httpx.HTTPStatusError as exc:
                    status = exc.response.status_code
                    if status != 429 and status < 500:
                        raise BackendError(f"backend returned HTTP {status}") from exc
                    last_exc = exc
                except (httpx.TimeoutException, httpx.TransportError) as exc:
                    last_exc = exc
                if attempt < self.max_retries:
                    logger.warning("backend call failed (%s); retry %d/%d", last_exc, attempt + 1, self.max_retries)
                    time.sleep(self.backoff * 2**attempt)
        raise BackendError(f"backend failed after {self.max_retries + 1} attempt(s): {last_exc}")

    def close(self) -> None:
        self._client.close()


def invoke(backend: LLMBackend, system: str, user: str, context=None) -> Completion:
    """Call ``backend`` at temperature 0 and time the call."""
    t0 = time.perf_counter()
    text = backend.complete(system, user, temperature=0.0, context=context)
    return Completion(text, time.perf_counter() - t0, backend.name)


def make_backend(kind: str, *, base_url: str | None = None, model: str | None = None,
                 token_env: str = DEFAULT_TOKEN_ENV, **kwargs) -> LLMBackend:
    if kind == "mock":
        return MockBackend()
    if kind == "remote":
        base_url = base_url or os.environ.get("GAZEMIND_BASE_URL")
        model = model or os.environ.get("GAZEMIND_MODEL")
        if not base_url or not model:
            raise BackendError("remote backend needs a base URL and model (GAZEMIND_BASE_URL / GAZEMIND_MODEL)")
        return ChatCompletionBackend(base_url, model, token_env=token_env, **kwargs)
    raise ValueError(f"unknown backend {kind!r}; expected 'mock' or 'remote'")
