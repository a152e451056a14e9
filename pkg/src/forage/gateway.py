"""Chat-completions client, deterministic mock backend and usage ledger.

One wire dialect is supported: the OpenAI-compatible ``/chat/completions``
shape (``messages``, ``tools``, ``tool_calls`` in the reply).
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Protocol

import httpx

from . import tokens
from .errors import AuthError, BackendError, ProtocolError, ScriptExhausted, TransportError

logger = logging.getLogger(__name__)

RETRY_STATUS = frozenset({408, 409, 429})


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0
    estimated: bool = False

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
            self.estimated or other.estimated,
        )

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens

    def to_dict(self) -> dict:
        d = {"input_tokens": self.input_tokens, "output_tokens": self.output_tokens}
        if self.estimated:
            d["estimated"] = True
        return d


@dataclass(frozen=True)
class ToolCall:
    name: str
    args: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "args": self.args}


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict, ...]
    tools: tuple[dict, ...] | None = None
    temperature: float = 0.0
    max_output_tokens: int = 1024
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(dict(m) for m in self.messages))
        if self.tools is not None:
            object.__setattr__(self, "tools", tuple(self.tools))
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.messages[0].get("role") not in ("system", "user"):
            raise ValueError("first message must come from system or user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def to_wire(self, model: str = "") -> dict:
        body: dict[str, Any] = {
            "model": model,
            "messages": [{"role": m["role"], "content": m["content"]} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        }
        if self.tools:
            body["tools"] = list(self.tools)
        if self.seed:
            body["seed"] = self.seed
        return body

    def serialize(self, model: str = "") -> str:
        """Byte-stable JSON body (sorted keys, fixed separators)."""
        return json.dumps(self.to_wire(model), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class ChatResponse:
    text: str | None = None
    tool_call: ToolCall | None = None
    usage: Usage = field(default_factory=Usage)

    def __post_init__(self):
        if self.text is None and self.tool_call is None:
            raise ProtocolError("response carries neither text nor a tool call")

    def payload(self) -> str:
        parts = []
        if self.text:
            parts.append(self.text)
        if self.tool_call is not None:
            parts.append(json.dumps(self.tool_call.to_dict(), sort_keys=True, ensure_ascii=False))
        return "\n".join(parts)


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    model: str
    auth: str | None = None
    timeout_ms: int = 120_000
    max_retries: int = 3
    backoff_base: float = 1.0
    backoff_multiplier: float = 2.0
    backoff_max: float = 60.0

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_base < 0 or self.backoff_multiplier < 1:
            raise ValueError("backoff must be non-negative and non-shrinking")

    def delay(self, attempt: int) -> float:
        return min(self.backoff_base * self.backoff_multiplier ** attempt, self.backoff_max)


class ChatBackend(Protocol):
    def chat(self, request: ChatRequest) -> ChatResponse: ...


def estimate_usage(request: ChatRequest, response: ChatResponse | None, tokenizer: str | None = None) -> Usage:
    out = tokens.count_tokens(response.payload(), tokenizer) if response is not None else 0
    return Usage(tokens.count_tokens(request.serialize(), tokenizer), out, estimated=True)


# -- ledger -----------------------------------------------------------------


@dataclass(frozen=True)
class LedgerEntry:
    call_kind: str
    usage: Usage

    def to_dict(self) -> dict:
        return {"call_kind": self.call_kind, **self.usage.to_dict()}


class CostLedger:
    """Append-only record of every backend call made for one episode."""

    KINDS = ("policy", "evaluate", "answer", "baseline")

    def __init__(self, entries: Iterable[LedgerEntry] = ()):
        self._entries: list[LedgerEntry] = list(entries)
        self._lock = threading.Lock()

    def add(self, call_kind: str, usage: Usage) -> None:
        if call_kind not in self.KINDS:
            raise ValueError(f"unknown call kind {call_kind!r}")
        with self._lock:
            self._entries.append(LedgerEntry(call_kind, usage))

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def since(self, index: int) -> Usage:
        total = Usage()
        for e in self.entries[index:]:
            total = total + e.usage
        return total

    @property
    def total(self) -> Usage:
        return self.since(0)


class MeteredBackend:
    """Wraps a backend so every call, failed or not, lands in a ledger.

    A failed call records the input side only (estimated from the request).
    """

    def __init__(self, backend: ChatBackend, ledger: CostLedger, call_kind: str, tokenizer: str | None = None):
        self.backend = backend
        self.ledger = ledger
        self.call_kind = call_kind
        self.tokenizer = tokenizer

    def chat(self, request: ChatRequest) -> ChatResponse:
        try:
            response = self.backend.chat(request)
        except (BackendError, ScriptExhausted):
            self.ledger.add(self.call_kind, estimate_usage(request, None, self.tokenizer))
            raise
        self.ledger.add(self.call_kind, response.usage)
        return response


# -- HTTP client ------------------------------------------------------------


def _parse_arguments(raw) -> dict:
    if isinstance(raw, dict):
        return raw
    if raw in (None, ""):
        return {}
    try:
        args = json.loads(raw)
    except (TypeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"tool call arguments are not JSON: {raw!r}") from exc
    if not isinstance(args, dict):
        raise ProtocolError("tool call arguments must be a JSON object")
    return args


def parse_wire_response(data: Any, request: ChatRequest, tokenizer: str | None = None) -> ChatResponse:
    try:
        message = data["choices"][0]["message"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"no choices[0].message in response: {str(data)[:200]}") from exc
    if not isinstance(message, dict):
        raise ProtocolError("choices[0].message is not an object")
    text = message.get("content")
    if text is not None and not isinstance(text, str):
        raise ProtocolError("message content must be a string")
    call = None
    tool_calls = message.get("tool_calls") or []
    if tool_calls:
        try:
            fn = tool_calls[0]["function"]
            name = fn["name"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError("malformed tool_calls entry") from exc
        call = ToolCall(str(name), _parse_arguments(fn.get("arguments")))
    response = ChatResponse(text=text or None, tool_call=call)
    usage = data.get("usage") if isinstance(data, dict) else None
    if isinstance(usage, dict) and "prompt_tokens" in usage:
        u = Usage(int(usage.get("prompt_tokens") or 0), int(usage.get("completion_tokens") or 0))
    else:
        u = estimate_usage(request, response, tokenizer)
        logger.debug("provider reported no usage; estimated %s", u)
    return ChatResponse(text=response.text, tool_call=call, usage=u)


class HttpChatBackend:
    def __init__(
        self,
        config: BackendConfig,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        tokenizer: str | None = None,
    ):
        self.config = config
        self.client = client or httpx.Client()
        self.sleep = sleep
        self.tokenizer = tokenizer

    @property
    def url(self) -> str:
        ep = self.config.endpoint.rstrip("/")
        return ep if ep.endswith("/chat/completions") else ep + "/chat/completions"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.auth:
            key = os.environ.get(self.config.auth)
            if not key:
                raise AuthError(f"credential variable {self.config.auth} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def chat(self, request: ChatRequest) -> ChatResponse:
        headers = self._headers()
        body = request.serialize(self.config.model).encode("utf-8")
        timeout = self.config.timeout_ms / 1000
        attempts = 1 + self.config.max_retries
        last = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                self.sleep(self.config.delay(attempt - 1))
            logger.debug("POST %s attempt %d body=%s", self.url, attempt + 1, body[:2000])
            try:
                resp = self.client.post(self.url, content=body, headers=headers, timeout=timeout)
            except httpx.TimeoutException as exc:
                last = f"timeout: {exc}"
                continue
            except httpx.TransportError as exc:
                last = f"transport: {exc}"
                continue
            status = resp.status_code
            if status in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {status})")
            if status in RETRY_STATUS or status >= 500:
                last = f"HTTP {status}"
                logger.warning("transient failure %s (attempt %d/%d)", last, attempt + 1, attempts)
                continue
            if status >= 400:
                raise ProtocolError(f"HTTP {status}: {resp.text[:500]}")
            try:
                data = resp.json()
            except ValueError as exc:
                raise ProtocolError("response body is not JSON") from exc
            logger.debug("response %s", str(data)[:2000])
            return parse_wire_response(data, request, self.tokenizer)
        raise TransportError(f"gave up after {attempts} attempts ({last})")


def chat(request: ChatRequest, config: BackendConfig, **kwargs) -> ChatResponse:
    return HttpChatBackend(config, **kwargs).chat(request)


# -- mock -------------------------------------------------------------------


def _as_response(item) -> ChatResponse:
    if isinstance(item, ChatResponse):
        return item
    if isinstance(item, str):
        return ChatResponse(text=item)
    if isinstance(item, ToolCall):
        return ChatResponse(tool_call=item)
    if isinstance(item, dict):
        if "tool_call" in item or "text" in item:
            call = item.get("tool_call")
            return ChatResponse(
                text=item.get("text"),
                tool_call=ToolCall(call["name"], dict(call.get("args") or {})) if call else None,
            )
        if "name" in item:
            return ChatResponse(tool_call=ToolCall(item["name"], dict(item.get("args") or {})))
    raise TypeError(f"cannot build a mock response from {item!r}")


class MockBackend:
    """Replays canned responses in order, deterministically.

    Responses without explicit usage get token counts estimated from the
    actual request and response. Every request seen is kept in
    :attr:`requests` for inspection.
    """

    def __init__(self, responses: Iterable = (), tokenizer: str | None = None):
        self.responses = [_as_response(r) for r in responses]
        self.cursor = 0
        self.requests: list[ChatRequest] = []
        self.tokenizer = tokenizer
        self._lock = threading.Lock()

    def mock_next(self) -> ChatResponse:
        with self._lock:
            if self.cursor >= len(self.responses):
                raise ScriptExhausted(f"mock script exhausted after {len(self.responses)} responses")
            item = self.responses[self.cursor]
            self.cursor += 1
        return item

    def chat(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
        item = self.mock_next()
        if item.usage.total:
            return item
        return ChatResponse(item.text, item.tool_call, estimate_usage(request, item, self.tokenizer))


def mock_next(mock: MockBackend) -> ChatResponse:
    return mock.mock_next()
