"""HTTP model provider backend (chat-completions + embeddings wire shape).

Credentials come from an environment variable named in the config; nothing
secret is ever written to disk. Transient failures (timeouts, 429, 5xx) are
retried up to 3 attempts with exponential backoff before raising
TransportError.
"""

from __future__ import annotations

import logging
import os
import time

import httpx

from ..errors import TransportError, ValidationError
from .templates import PromptTemplate

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BACKOFF_BASE_SECONDS = 0.5
_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class HttpProviderBackend:
    kind = "provider"

    def __init__(
        self,
        endpoint: str,
        chat_model: str,
        embed_model: str,
        api_key_env: str = "REDEVAL_API_KEY",
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        backoff_base: float = BACKOFF_BASE_SECONDS,
    ):
        api_key = os.environ.get(api_key_env, "")
        if not api_key:
            raise ValidationError(
                f"provider backend needs an API key in ${api_key_env}"
            )
        self.endpoint = endpoint.rstrip("/")
        self.chat_model = chat_model
        self.default_embed_model = embed_model
        self.backoff_base = backoff_base
        self._client = httpx.Client(
            timeout=timeout,
            headers={"Authorization": f"Bearer {api_key}"},
            transport=transport,
        )

    def _post(self, path: str, body: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            try:
                response = self._client.post(f"{self.endpoint}{path}", json=body)
            except httpx.HTTPError as exc:
                last_error = exc
            else:
                if response.status_code == 200:
                    return response.json()
                last_error = TransportError(
                    f"provider returned HTTP {response.status_code}: "
                    f"{response.text[:200]}"
                )
                if response.status_code not in _RETRYABLE_STATUS:
                    raise last_error
            if attempt < MAX_ATTEMPTS:
                delay = self.backoff_base * (2 ** (attempt - 1))
                logger.warning(
                    "provider call failed (attempt %d/%d), retrying in %.1fs: %s",
                    attempt, MAX_ATTEMPTS, delay, last_error,
                )
                time.sleep(delay)
        raise TransportError(
            f"provider call failed after {MAX_ATTEMPTS} attempts: {last_error}"
        )

    def complete(self, template: PromptTemplate, payload: dict, prompt: str):
        body = {
            "model": self.chat_model,
            "messages": [{"role": "user", "content": prompt}],
        }
        data = self._post("/chat/completions", body)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed provider response: {exc}") from exc
        usage = data.get("usage") or {}
        return text, usage.get("prompt_tokens"), usage.get("completion_tokens")

    def embed(self, texts: list[str], model_id: str | None = None):
        model = model_id or self.default_embed_model
        data = self._post("/embeddings", {"model": model, "input": list(texts)})
        try:
            rows = sorted(data["data"], key=lambda r: r["index"])
            vectors = [[float(x) for x in row["embedding"]] for row in rows]
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise TransportError(
                f"embedding count mismatch: sent {len(texts)}, got {len(vectors)}"
            )
        usage = data.get("usage") or {}
        return vectors, model, usage.get("prompt_tokens")
