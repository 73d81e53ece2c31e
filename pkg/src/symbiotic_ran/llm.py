"""Decision backends: scripted stand-ins and an OpenAI-style chat client."""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol

import httpx

log = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """A backend call failed; ``exchange`` holds the prompt and latency."""

    def __init__(self, message: str, exchange: "ChatExchange | None" = None):
        super().__init__(message)
        self.exchange = exchange


class TransportError(BackendError):
    pass


class BackendTimeout(TransportError):
    pass


class AuthError(BackendError):
    pass


class HttpStatusError(BackendError):
    def __init__(self, message: str, status: int, exchange: "ChatExchange | None" = None):
        super().__init__(message, exchange)
        self.status = status


class MalformedResponseError(BackendError):
    pass


class ExtractionError(ValueError):
    """No usable numeric field in a model response."""


class NoJsonObjectError(ExtractionError):
    pass


class MissingKeyError(ExtractionError):
    pass


class NonNumericValueError(ExtractionError):
    pass


@dataclass
class ChatExchange:
    prompt: str
    response: str
    latency_ms: float
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    backend: str = ""

    def to_record(self) -> dict:
        return {"backend": self.backend, "prompt": self.prompt, "response": self.response,
                "latency_ms": self.latency_ms, "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens}


class Backend(Protocol):
    name: str

    def complete(self, prompt: str, context: Mapping[str, Any] | None = None) -> ChatExchange: ...


# --------------------------------------------------------------------------
# JSON field extraction

def _reject_constant(token):
    raise ValueError(f"non-finite literal {token}")


_decoder = json.JSONDecoder(parse_constant=_reject_constant)


def _iter_objects(text: str):
    i = text.find("{")
    while i != -1:
        try:
            obj, _ = _decoder.raw_decode(text, i)
        except (ValueError, RecursionError):
            obj = None
        if isinstance(obj, dict):
            yield obj
        i = text.find("{", i + 1)


def _lookup(obj: dict, key: str, depth: int = 0):
    if key in obj:
        return True, obj[key]
    lowered = {k.lower(): k for k in obj if isinstance(k, str)}
    if key.lower() in lowered:
        return True, obj[lowered[key.lower()]]
    if depth < 4:
        for v in obj.values():
            if isinstance(v, dict):
                found, value = _lookup(v, key, depth + 1)
                if found:
                    return found, value
    return False, None


def _variants(text: str):
    yield text
    unescaped = text.replace('\\"', '"')
    if unescaped != text:
        yield unescaped
    collapsed = unescaped.replace("{{", "{").replace("}}", "}")
    if collapsed != unescaped:
        yield collapsed


def extract_json_field(text: str, key: str) -> float:
    """First numeric ``key`` in any JSON object embedded in ``text``.

    Prose around the object is ignored. Escaped quotes and doubled template
    braces, as they show up in logged transcripts, are tolerated.
    """
    if not isinstance(text, str):
        raise NoJsonObjectError(f"expected text, got {type(text).__name__}")
    saw_object = False
    bad_values = []
    for variant in _variants(text):
        for obj in _iter_objects(variant):
            saw_object = True
            found, value = _lookup(obj, key)
            if not found:
                continue
            numeric = isinstance(value, (int, float)) and not isinstance(value, bool)
            if not numeric or not math.isfinite(value):
                bad_values.append(value)
                continue
            return float(value)
    if bad_values:
        raise NonNumericValueError(f"{key!r} is not a finite number: {bad_values[0]!r}")
    if saw_object:
        raise MissingKeyError(f"no JSON object with key {key!r}")
    raise NoJsonObjectError("no JSON object in response")


# --------------------------------------------------------------------------
# backends

ScriptFn = Callable[[str, Mapping[str, Any]], str]


class ScriptedBackend:
    """In-process backend; output is a pure function of prompt and context.

    Latency is a fixed modeled value so transcripts stay reproducible.
    """

    def __init__(self, fn: ScriptFn, name: str = "scripted", latency_ms: float = 0.0):
        self.fn = fn
        self.name = name
        self.latency_ms = float(latency_ms)

    def complete(self, prompt: str, context: Mapping[str, Any] | None = None) -> ChatExchange:
        try:
            text = self.fn(prompt, dict(context or {}))
        except BackendError:
            raise
        except Exception as exc:
            raise BackendError(f"{self.name}: {exc}",
                               ChatExchange(prompt, "", self.latency_ms, backend=self.name)) from exc
        return ChatExchange(prompt, text, self.latency_ms, backend=self.name)


def echo_json(payload: Mapping[str, Any] | str) -> ScriptFn:
    text = payload if isinstance(payload, str) else json.dumps(dict(payload))
    return lambda prompt, context: text


class TokenBucket:
    def __init__(self, rate_per_s: float, burst: int = 1, clock=time.monotonic, sleep=time.sleep):
        self.rate = float(rate_per_s)
        self.capacity = max(1, int(burst))
        self.tokens = float(self.capacity)
        self.clock, self.sleep = clock, sleep
        self.updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self.clock()
            self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
            self.updated = now
            if self.tokens < 1:
                self.sleep((1 - self.tokens) / self.rate)
                self.tokens = 1.0
                self.updated = self.clock()
            self.tokens -= 1


@dataclass
class BackendSpec:
    """``kind`` is ``"scripted"`` or ``"http"``; the other fields apply per kind."""

    kind: str = "scripted"
    name: str = "echo-json"
    params: dict = field(default_factory=dict)
    endpoint: str = ""
    model: str = ""
    api_key_env: str | None = None
    timeout_ms: float = 30_000
    max_retries: int = 2
    temperature: float = 0.0
    max_tokens: int | None = None
    rate_limit_per_s: float | None = None

    def __post_init__(self):
        if self.kind not in ("scripted", "http"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.kind == "http" and not self.endpoint:
            raise ValueError("http backend needs an endpoint")

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any] | str) -> "BackendSpec":
        if isinstance(cfg, str):
            return cls(kind="scripted", name=cfg)
        known = set(cls.__dataclass_fields__)
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown backend fields {sorted(extra)}")
        return cls(**dict(cfg))


RETRYABLE_STATUS = {408, 425, 429, 500, 502, 503, 504}


class HttpBackend:
    """Chat-completions client (hosted APIs and local model servers alike)."""

    def __init__(self, spec: BackendSpec, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep, backoff_s: float = 0.5):
        self.spec = spec
        self.name = spec.model or spec.endpoint
        self._client = client or httpx.Client()
        self._sleep = sleep
        self.backoff_s = backoff_s
        self._bucket = TokenBucket(spec.rate_limit_per_s) if spec.rate_limit_per_s else None

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.spec.api_key_env:
            key = os.environ.get(self.spec.api_key_env)
            if not key:
                raise AuthError(f"environment variable {self.spec.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, prompt: str) -> dict:
        body = {"model": self.spec.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.spec.temperature,
                "stream": False}
        if self.spec.max_tokens is not None:
            body["max_tokens"] = self.spec.max_tokens
        return body

    def complete(self, prompt: str, context: Mapping[str, Any] | None = None) -> ChatExchange:
        t0 = time.perf_counter()

        def failed(msg, cls=BackendError, **kw):
            ex = ChatExchange(prompt, "", (time.perf_counter() - t0) * 1e3, backend=self.name)
            return cls(msg, exchange=ex, **kw)

        headers = self._headers()
        timeout = self.spec.timeout_ms / 1e3
        last: BackendError | None = None
        for attempt in range(self.spec.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_s * 2 ** (attempt - 1))
            if self._bucket is not None:
                self._bucket.acquire()
            try:
                resp = self._client.post(self.spec.endpoint, json=self._payload(prompt),
                                         headers=headers, timeout=timeout)
            except httpx.TimeoutException as exc:
                last = failed(f"timeout: {exc}", BackendTimeout)
                continue
            except httpx.TransportError as exc:
                last = failed(f"transport error: {exc}", TransportError)
                continue
            if resp.status_code in (401, 403):
                raise failed(f"auth failed ({resp.status_code})", AuthError)
            if resp.status_code in RETRYABLE_STATUS:
                last = failed(f"HTTP {resp.status_code}", HttpStatusError, status=resp.status_code)
                continue
            if not 200 <= resp.status_code < 300:
                raise failed(f"HTTP {resp.status_code}", HttpStatusError, status=resp.status_code)
            try:
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
                if not isinstance(text, str):
                    raise TypeError("content is not a string")
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise failed(f"malformed response envelope: {exc}", MalformedResponseError)
            usage = body.get("usage") or {}
            return ChatExchange(prompt, text, (time.perf_counter() - t0) * 1e3,
                                usage.get("prompt_tokens"), usage.get("completion_tokens"),
                                self.name)
        assert last is not None
        raise last


SCRIPTED: dict[str, Callable[..., ScriptFn]] = {}


def register_scripted(name: str):
    def deco(factory):
        SCRIPTED[name] = factory
        return factory
    return deco


register_scripted("echo-json")(lambda payload='{"value": 0}', **_: echo_json(payload))


def build_backend(spec: BackendSpec | Mapping | str, client: httpx.Client | None = None) -> Backend:
    if not isinstance(spec, BackendSpec):
        spec = BackendSpec.from_config(spec)
    if spec.kind == "http":
        return HttpBackend(spec, client=client)
    # scripted personalities register themselves on import
    from . import negotiation, type1  # noqa: F401
    try:
        factory = SCRIPTED[spec.name]
    except KeyError:
        raise ValueError(f"unknown scripted backend {spec.name!r}; known: {sorted(SCRIPTED)}") from None
    params = dict(spec.params)
    latency = float(params.pop("latency_ms", 0.0))
    return ScriptedBackend(factory(**params), name=spec.name, latency_ms=latency)


def complete(backend: Backend | BackendSpec | Mapping | str, prompt: str,
             context: Mapping[str, Any] | None = None) -> ChatExchange:
    if not hasattr(backend, "complete"):
        backend = build_backend(backend)
    return backend.complete(prompt, context)
