"""Minimal chat-completions client with retries and cost accounting.

Speaks the common JSON wire shape: POST {model, messages, temperature} to
``<base_url>/v1/chat/completions``, reads ``choices[0].message.content``
and ``usage.{prompt_tokens, completion_tokens}``. The API key is read from
an environment variable and never logged or echoed in errors.

Error taxonomy:

* TransportError: network failure, timeout, or retryable 5xx after all
  retries are spent
* ProtocolError: non-retryable HTTP status (carries the status code)
* DecodeError: 2xx body that is not the expected JSON shape
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field

import httpx

logger = logging.getLogger(__name__)

RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    pass


class ProtocolError(GatewayError):
    def __init__(self, status_code: int, detail: str = ""):
        self.status_code = status_code
        super().__init__(f"HTTP {status_code}{': ' + detail if detail else ''}")


class DecodeError(GatewayError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | assistant | user
    content: str


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )


ZERO_USAGE = TokenUsage(0, 0)


@dataclass(frozen=True)
class ChatReply:
    text: str
    usage: TokenUsage


@dataclass(frozen=True)
class ModelPrice:
    input_usd_per_token: float
    output_usd_per_token: float


@dataclass
class PricingTable:
    prices: dict[str, ModelPrice] = field(default_factory=dict)

    def usage_to_usd(self, usage: TokenUsage, model: str) -> float:
        if model not in self.prices:
            raise KeyError(f"no pricing entry for model {model!r}")
        price = self.prices[model]
        return (
            usage.prompt_tokens * price.input_usd_per_token
            + usage.completion_tokens * price.output_usd_per_token
        )


@dataclass
class GatewayConfig:
    base_url: str
    model: str
    api_key_env: str = "PLANRAG_API_KEY"
    temperature: float = 0.0
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_base_s: float = 0.5
    max_concurrency: int = 4


class ChatClient:
    """Thread-safe; one instance can serve concurrent executor calls."""

    def __init__(self, config: GatewayConfig, transport: httpx.BaseTransport | None = None):
        self._config = config
        self._semaphore = threading.Semaphore(config.max_concurrency)
        self._client = httpx.Client(
            base_url=config.base_url,
            timeout=config.timeout_s,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self._config.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def chat(self, messages: list[ChatMessage], temperature: float | None = None) -> ChatReply:
        if not messages:
            raise ValueError("messages must be non-empty")
        if messages[0].role != "system":
            raise ValueError("first message must have role 'system'")
        payload = {
            "model": self._config.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": self._config.temperature if temperature is None else temperature,
        }
        last_exc: Exception | None = None
        for attempt in range(self._config.max_retries):
            if attempt > 0:
                time.sleep(self._config.backoff_base_s * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    response = self._client.post(
                        "/v1/chat/completions", json=payload, headers=self._headers()
                    )
            except httpx.HTTPError as err:
                logger.warning("chat transport failure (attempt %d): %s", attempt + 1, type(err).__name__)
                last_exc = err
                continue
            if response.status_code in RETRYABLE_STATUSES:
                logger.warning("chat got HTTP %d (attempt %d)", response.status_code, attempt + 1)
                last_exc = ProtocolError(response.status_code)
                continue
            if response.status_code < 200 or response.status_code >= 300:
                raise ProtocolError(response.status_code, detail=response.text[:200])
            return _decode_reply(response)
        raise TransportError(
            f"gave up after {self._config.max_retries} attempts ({type(last_exc).__name__})"
        )


def _decode_reply(response: httpx.Response) -> ChatReply:
    try:
        body = response.json()
    except ValueError as err:
        raise DecodeError("response body is not JSON") from err
    try:
        text = body["choices"][0]["message"]["content"]
        usage_obj = body.get("usage", {})
        usage = TokenUsage(
            int(usage_obj.get("prompt_tokens", 0)),
            int(usage_obj.get("completion_tokens", 0)),
        )
    except (KeyError, IndexError, TypeError) as err:
        raise DecodeError(f"unexpected response shape: {err}") from err
    if not isinstance(text, str):
        raise DecodeError("choices[0].message.content is not a string")
    return ChatReply(text=text, usage=usage)
