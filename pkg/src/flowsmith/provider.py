"""Model backends: chat completion, embeddings, usage accounting.

Two backends share one interface. The HTTP backend adapts any service
speaking the common chat-completions convention; the scripted backend replays
a FIFO queue of canned responses and derives embeddings from content hashes,
making every test deterministic with no network and no keys.

Money arithmetic lives here too: usage records aggregate additively and cost
is linear in token counts, so test oracles can check it to machine precision.
"""

from __future__ import annotations

import hashlib
import logging
import math
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable

log = logging.getLogger(__name__)

CHAT_ROLES = frozenset({"system", "user", "assistant", "tool"})

DEFAULT_EMBEDDING_DIM = 256
"""Dimension of the scripted hash-embedding unless configured otherwise."""

TOKEN_ESTIMATE_DIVISOR = 4
"""Fallback tokens-per-character heuristic when a backend reports no usage."""

ROLE_MODEL_ALIASES = ("orchestrator_model", "judge_model", "agent_model", "embedding_model")
"""model_ref values resolved through per-role configuration bindings."""


class BackendError(Exception):
    """Backend failed to produce a response (after any retries)."""


class ConfigError(Exception):
    """Request or configuration violates a precondition; nothing dispatched."""


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion invocation. temperature None = backend default."""

    model_ref: str
    messages: tuple[tuple[str, str], ...]
    temperature: float | None = None
    max_tokens: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple((r, t) for r, t in self.messages))


@dataclass(frozen=True)
class UsageRecord:
    """Token counts for one or more calls; additive under aggregation."""

    input_tokens: int
    output_tokens: int
    model_ref: str
    estimated: bool = False


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: UsageRecord
    finish_reason: str = "stop"  # stop | length | error


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not all(math.isfinite(v) for v in self.values):
            raise ConfigError("embedding contains non-finite values")

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class PriceTable:
    """USD per million input/output tokens, keyed by model_ref."""

    prices: Any  # mapping model_ref -> (usd_per_m_input, usd_per_m_output)

    def __post_init__(self):
        normalized = {}
        for ref, pair in dict(self.prices).items():
            try:
                if isinstance(pair, dict):
                    p_in = float(pair["input_per_mtok"])
                    p_out = float(pair["output_per_mtok"])
                else:
                    p_in, p_out = float(pair[0]), float(pair[1])
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise ConfigError(
                    f"price for {ref!r} must be [input_per_mtok, output_per_mtok] "
                    f"or an object with those keys"
                ) from exc
            if p_in < 0 or p_out < 0:
                raise ConfigError(f"negative price for {ref!r}")
            normalized[ref] = (p_in, p_out)
        object.__setattr__(self, "prices", normalized)

    def price(self, model_ref: str) -> tuple[float, float]:
        try:
            return self.prices[model_ref]
        except KeyError:
            raise ConfigError(f"no price configured for model {model_ref!r}") from None


def _check_request(request: ChatRequest) -> None:
    if not request.messages:
        raise ConfigError("chat request has no messages")
    for role, _ in request.messages:
        if role not in CHAT_ROLES:
            raise ConfigError(f"unknown message role {role!r}")
    if request.temperature is not None and request.temperature < 0:
        raise ConfigError("temperature must be >= 0")
    if request.max_tokens < 1:
        raise ConfigError("max_tokens must be >= 1")


def estimate_tokens(text: str) -> int:
    return max(1, len(text) // TOKEN_ESTIMATE_DIVISOR) if text else 0


def cost(usage_records: Iterable[UsageRecord], price_table: PriceTable) -> float:
    """Total USD for the given usage. Linear and order-stable."""
    parts = []
    for record in usage_records:
        p_in, p_out = price_table.price(record.model_ref)
        # Divide before multiplying: keeps round-number cases exact
        # (1,000,000 tokens at $X/M costs exactly $X).
        parts.append(record.input_tokens / 1e6 * p_in + record.output_tokens / 1e6 * p_out)
    return math.fsum(parts)


def aggregate_usage(records: Iterable[UsageRecord]) -> tuple[UsageRecord, ...]:
    """Merge records per model_ref; estimated taints the whole bucket."""
    buckets: dict[str, list] = {}
    for r in records:
        bucket = buckets.setdefault(r.model_ref, [0, 0, False])
        bucket[0] += r.input_tokens
        bucket[1] += r.output_tokens
        bucket[2] = bucket[2] or r.estimated
    return tuple(
        UsageRecord(input_tokens=b[0], output_tokens=b[1], model_ref=ref, estimated=b[2])
        for ref, b in sorted(buckets.items())
    )


def hash_embedding(text: str, dim: int) -> EmbeddingVector:
    """Deterministic pseudo-embedding: coordinate i is derived from
    sha256(text || NUL || i), mapped uniformly into [-1, 1)."""
    values = []
    for i in range(dim):
        digest = hashlib.sha256(f"{text}\x00{i}".encode("utf-8")).digest()
        unit = int.from_bytes(digest[:8], "big") / 2.0**64
        values.append(unit * 2.0 - 1.0)
    return EmbeddingVector(tuple(values))


class ScriptedProvider:
    """Deterministic backend replaying queued responses in FIFO order.

    chat() dequeues one canned string per call; embed() hashes its input.
    Identical enqueue sequences produce identical outputs, which is what the
    replay-determinism guarantees of the evolution loop rest on.
    """

    def __init__(self, embedding_dim: int = DEFAULT_EMBEDDING_DIM):
        if embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        self.embedding_dim = embedding_dim
        self._queue: deque[str] = deque()
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    def enqueue(self, *responses: str) -> None:
        with self._lock:
            for text in responses:
                if not isinstance(text, str):
                    raise ConfigError("scripted responses must be strings")
                self._queue.append(text)

    def depth(self) -> int:
        with self._lock:
            return len(self._queue)

    def chat(self, request: ChatRequest) -> ChatResponse:
        _check_request(request)
        with self._lock:
            self.requests.append(request)
            if not self._queue:
                raise BackendError("scripted response queue exhausted")
            text = self._queue.popleft()
        usage = UsageRecord(
            input_tokens=sum(estimate_tokens(t) for _, t in request.messages),
            output_tokens=estimate_tokens(text),
            model_ref=request.model_ref,
            estimated=True,
        )
        return ChatResponse(text=text, usage=usage, finish_reason="stop")

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ConfigError("cannot embed empty text")
        return hash_embedding(text, self.embedding_dim)


class HTTPProvider:
    """Adapter for chat-completions-convention HTTP backends.

    Role aliases (orchestrator_model, judge_model, agent_model,
    embedding_model) are resolved through the constructor bindings; any other
    model_ref passes through verbatim. Transport-class failures are retried
    with exponential backoff; everything else fails fast.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        model_bindings: dict[str, str] | None = None,
        embedding_dim: int = DEFAULT_EMBEDDING_DIM,
        timeout_s: float = 60.0,
        retry_backoffs: tuple[float, ...] = (0.5, 1.0, 2.0),
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model_bindings = dict(model_bindings or {})
        self.embedding_dim = embedding_dim
        self.timeout_s = timeout_s
        self.retry_backoffs = tuple(retry_backoffs)
        self._sleep = sleep

    def _resolve(self, model_ref: str) -> str:
        if model_ref in ROLE_MODEL_ALIASES:
            bound = self.model_bindings.get(model_ref)
            if not bound:
                raise ConfigError(f"role alias {model_ref!r} has no model binding")
            return bound
        return model_ref

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        import requests

        last_exc: Exception | None = None
        for attempt in range(len(self.retry_backoffs) + 1):
            if attempt:
                self._sleep(self.retry_backoffs[attempt - 1])
            try:
                resp = requests.post(
                    f"{self.base_url}{path}", json=payload, headers=self._headers(), timeout=self.timeout_s
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                log.warning("transport failure on %s (attempt %d): %s", path, attempt + 1, exc)
                continue
            if resp.status_code in (429,) or resp.status_code >= 500:
                last_exc = BackendError(f"HTTP {resp.status_code} from {path}")
                log.warning("retriable status %d on %s (attempt %d)", resp.status_code, path, attempt + 1)
                continue
            if resp.status_code != 200:
                raise BackendError(f"HTTP {resp.status_code} from {path}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise BackendError(f"non-JSON response from {path}") from exc
        raise BackendError(f"exhausted retries on {path}: {last_exc}")

    def chat(self, request: ChatRequest) -> ChatResponse:
        _check_request(request)
        model = self._resolve(request.model_ref)
        payload: dict[str, Any] = {
            "model": model,
            "messages": [{"role": r, "content": t} for r, t in request.messages],
            "max_tokens": request.max_tokens,
        }
        if request.temperature is not None:
            payload["temperature"] = request.temperature
        raw = self._post("/chat/completions", payload)
        try:
            choice = raw["choices"][0]
            text = choice["message"]["content"] or ""
            finish = choice.get("finish_reason") or "stop"
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat response: {exc!r}") from exc
        usage_raw = raw.get("usage") or {}
        if "prompt_tokens" in usage_raw and "completion_tokens" in usage_raw:
            usage = UsageRecord(
                input_tokens=int(usage_raw["prompt_tokens"]),
                output_tokens=int(usage_raw["completion_tokens"]),
                model_ref=request.model_ref,
            )
        else:
            usage = UsageRecord(
                input_tokens=sum(estimate_tokens(t) for _, t in request.messages),
                output_tokens=estimate_tokens(text),
                model_ref=request.model_ref,
                estimated=True,
            )
        finish_reason = finish if finish in ("stop", "length", "error") else "stop"
        return ChatResponse(text=text, usage=usage, finish_reason=finish_reason)

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ConfigError("cannot embed empty text")
        model = self._resolve("embedding_model")
        raw = self._post("/embeddings", {"model": model, "input": text})
        try:
            values = raw["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed embedding response: {exc!r}") from exc
        return EmbeddingVector(tuple(float(v) for v in values))
