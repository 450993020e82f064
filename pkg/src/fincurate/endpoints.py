"""Clients for OpenAI-compatible chat-completion and embedding services.

Every model in the pipeline (distiller, judges, verifier, policy, embedder)
is just an :class:`EndpointConfig`. Calls retry transient failures with
exponential backoff and full jitter; a per-endpoint semaphore bounds the
number of in-flight requests. API keys are resolved from the environment
variable named by ``api_key_env``, never stored in config files.
"""

from __future__ import annotations

import os
import random
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .errors import ConfigError, EndpointError

BACKOFF_BASE = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_CAP = 60.0

# Statuses worth retrying on a shared inference server; auth/validation
# failures are terminal no matter how often they are repeated.
RETRYABLE_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True, slots=True)
class SamplingParams:
    temperature: float = 0.6
    top_p: float = 0.85
    max_tokens: int = 4096

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ConfigError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")


@dataclass(frozen=True, slots=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str = ""
    timeout: float = 120.0
    max_retries: int = 3
    max_concurrency: int = 8
    sampling: SamplingParams = field(default=SamplingParams())

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigError("base_url must be non-empty")
        if self.timeout <= 0:
            raise ConfigError("timeout must be > 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")


@dataclass(frozen=True, slots=True)
class ChatResult:
    text: str
    prompt_tokens: int
    completion_tokens: int
    finish_reason: FinishReason

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise EndpointError("token counts must be >= 0")


def endpoint_from_dict(obj: dict) -> EndpointConfig:
    """Build an EndpointConfig from a mapping whose keys mirror the field names."""
    if not isinstance(obj, dict):
        raise ConfigError("endpoint config must be a mapping")
    known = {"base_url", "model", "api_key_env", "timeout", "max_retries", "max_concurrency", "sampling"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown endpoint config keys: {sorted(unknown)}")
    for key in ("base_url", "model"):
        if key not in obj:
            raise ConfigError(f"endpoint config missing {key!r}")
    sampling_obj = obj.get("sampling", {})
    if not isinstance(sampling_obj, dict):
        raise ConfigError("sampling must be a mapping")
    sampling_unknown = set(sampling_obj) - {"temperature", "top_p", "max_tokens"}
    if sampling_unknown:
        raise ConfigError(f"unknown sampling keys: {sorted(sampling_unknown)}")
    sampling = SamplingParams(**sampling_obj)
    return EndpointConfig(
        base_url=str(obj["base_url"]).rstrip("/"),
        model=str(obj["model"]),
        api_key_env=str(obj.get("api_key_env", "")),
        timeout=float(obj.get("timeout", 120.0)),
        max_retries=int(obj.get("max_retries", 3)),
        max_concurrency=int(obj.get("max_concurrency", 8)),
        sampling=sampling,
    )


def load_endpoint_config(path: str | Path) -> EndpointConfig:
    """Load an endpoint config from a YAML (or JSON) file."""
    import yaml

    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"endpoint config file not found: {path}")
    try:
        obj = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid config: {exc}") from exc
    return endpoint_from_dict(obj)


class EndpointClient:
    """Shareable handle for one endpoint; safe to call from many workers.

    ``transport`` and ``sleeper`` exist for tests (httpx.MockTransport and a
    no-op sleep); production callers never pass them.
    """

    def __init__(
        self,
        config: EndpointConfig,
        transport: httpx.BaseTransport | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._semaphore = threading.BoundedSemaphore(config.max_concurrency)
        self._sleeper = sleeper
        # keepalive sized to the concurrency bound: at most max_concurrency
        # requests are in flight, and churning sockets below that just wastes fds
        limits = httpx.Limits(
            max_connections=config.max_concurrency,
            max_keepalive_connections=config.max_concurrency,
        )
        self._http = httpx.Client(timeout=config.timeout, transport=transport, limits=limits)

    def close(self) -> None:
        self._http.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env)
            if key is None:
                raise ConfigError(
                    f"api key environment variable {self.config.api_key_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        """POST with retry on transient failures; at most 1 + max_retries attempts."""
        url = f"{self.config.base_url}{path}"
        headers = self._headers()
        last_error: EndpointError | None = None
        with self._semaphore:
            for attempt in range(1 + self.config.max_retries):
                if attempt > 0:
                    delay = random.uniform(0.0, min(BACKOFF_CAP, BACKOFF_BASE * BACKOFF_FACTOR ** (attempt - 1)))
                    self._sleeper(delay)
                try:
                    response = self._http.post(url, json=payload, headers=headers)
                except httpx.TransportError as exc:
                    last_error = EndpointError(f"transport failure for {url}: {exc}", retryable=True)
                    continue
                if response.status_code // 100 == 2:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise EndpointError(f"non-JSON response from {url}: {exc}", status=response.status_code) from exc
                retryable = response.status_code in RETRYABLE_STATUSES
                last_error = EndpointError(
                    f"HTTP {response.status_code} from {url}: {response.text[:200]}",
                    status=response.status_code,
                    retryable=retryable,
                )
                if not retryable:
                    raise last_error
        assert last_error is not None
        raise last_error

    def _get(self, path: str) -> dict:
        url = f"{self.config.base_url}{path}"
        try:
            response = self._http.get(url, headers=self._headers())
        except httpx.TransportError as exc:
            raise EndpointError(f"transport failure for {url}: {exc}", retryable=True) from exc
        if response.status_code // 100 != 2:
            raise EndpointError(f"HTTP {response.status_code} from {url}", status=response.status_code)
        return response.json()

    def chat(self, system: str | None, user: str) -> ChatResult:
        if not user:
            raise ConfigError("user prompt must be non-empty")
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": user})
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.sampling.temperature,
            "top_p": self.config.sampling.top_p,
            "max_tokens": self.config.sampling.max_tokens,
        }
        body = self._post("/chat/completions", payload)
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
            raw_reason = choice.get("finish_reason", "stop")
            usage = body.get("usage", {})
        except (KeyError, IndexError, TypeError) as exc:
            raise EndpointError(f"malformed chat completion response: {exc}") from exc
        if not text:
            raise EndpointError("empty completion")
        try:
            finish = FinishReason(raw_reason)
        except ValueError:
            finish = FinishReason.ERROR
        return ChatResult(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            finish_reason=finish,
        )

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        payload = {"model": self.config.model, "input": list(texts)}
        body = self._post("/embeddings", payload)
        try:
            data = sorted(body["data"], key=lambda item: item["index"])
            vectors = [list(map(float, item["embedding"])) for item in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise EndpointError(f"malformed embeddings response: {exc}") from exc
        if len(vectors) != len(texts):
            raise EndpointError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        return vectors

    def tokenize_count(self, text: str) -> int:
        body = self._post("/tokenize", {"model": self.config.model, "prompt": text})
        try:
            return int(body["count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise EndpointError(f"malformed tokenize response: {exc}") from exc

    def healthy(self) -> bool:
        try:
            self._get("/models")
            return True
        except (EndpointError, ConfigError):
            return False


_clients: dict[EndpointConfig, EndpointClient] = {}
_clients_lock = threading.Lock()


def client_for(config: EndpointConfig) -> EndpointClient:
    """Shared client per endpoint config, so the concurrency bound is global."""
    with _clients_lock:
        client = _clients.get(config)
        if client is None:
            client = EndpointClient(config)
            _clients[config] = client
        return client


def chat_complete(config: EndpointConfig, system: str | None, user: str) -> ChatResult:
    """One chat completion against the endpoint, with the configured retry policy."""
    return client_for(config).chat(system, user)


def embed(config: EndpointConfig, texts: Sequence[str], batch_size: int = 64) -> list[list[float]]:
    """Embed texts in order, batching requests and checking dimension consistency."""
    if not texts:
        raise ConfigError("embed requires at least one text")
    if any(not t for t in texts):
        raise ConfigError("embed requires every text to be non-empty")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    client = client_for(config)
    batches = [texts[i : i + batch_size] for i in range(0, len(texts), batch_size)]
    if len(batches) == 1:
        results = [client.embed_batch(batches[0])]
    else:
        from concurrent.futures import ThreadPoolExecutor

        workers = min(config.max_concurrency, len(batches))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(client.embed_batch, batches))
    vectors = [vec for batch in results for vec in batch]
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise EndpointError(f"inconsistent embedding dimensions in batch: {sorted(dims)}")
    if 0 in dims:
        raise EndpointError("endpoint returned zero-dimensional embeddings")
    return vectors


def count_tokens_external(config: EndpointConfig, text: str) -> int:
    """Model-exact token count from the endpoint's tokenize route."""
    return client_for(config).tokenize_count(text)


def health_check(config: EndpointConfig) -> bool:
    return client_for(config).healthy()
