"""Generator/Scorer gateway: backends, disk cache, call accounting.

The Generator produces text completions; the Scorer returns per-token
log-probabilities of a supplied continuation. Backends are pluggable:
an HTTP client for OpenAI-compatible completion endpoints and a fully
scripted backend for deterministic tests.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Protocol, Sequence

import requests


class GatewayError(Exception):
    pass


class BackendUnavailable(GatewayError):
    """Transport failure that persisted through the bounded retries."""


class ContextOverflow(GatewayError):
    """Prompt exceeds the backend's context limit; never silently truncated."""


class LogprobsUnsupported(GatewayError):
    """Endpoint cannot echo per-token log-probabilities."""


class ScriptMiss(GatewayError):
    """A scripted backend saw a request it has no canned response for."""


@dataclass(frozen=True)
class GeneratorRequest:
    prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 64
    stop_sequences: tuple[str, ...] = ()

    def payload(self) -> dict[str, Any]:
        return {
            "prompt": self.prompt,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "stop_sequences": list(self.stop_sequences),
        }


@dataclass(frozen=True)
class ScorerRequest:
    prompt: str
    continuation: str

    def payload(self) -> dict[str, Any]:
        return {"prompt": self.prompt, "continuation": self.continuation}


@dataclass(frozen=True)
class ScorerResponse:
    token_logprobs: tuple[float, ...]
    mean_nll: float

    @classmethod
    def from_logprobs(cls, logprobs: Sequence[float]) -> "ScorerResponse":
        if not logprobs:
            raise ValueError("scorer response must cover at least one token")
        mean_nll = -sum(logprobs) / len(logprobs)
        return cls(token_logprobs=tuple(logprobs), mean_nll=mean_nll)

    def to_dict(self) -> dict[str, Any]:
        return {"token_logprobs": list(self.token_logprobs), "mean_nll": self.mean_nll}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScorerResponse":
        return cls(token_logprobs=tuple(d["token_logprobs"]), mean_nll=d["mean_nll"])


@dataclass(frozen=True)
class LlmExchange:
    role: str  # "generator" | "scorer"
    request: dict[str, Any]
    response: Any
    cache_key: str
    latency: float
    from_cache: bool


def _digest(payload: dict[str, Any]) -> str:
    blob = json.dumps(payload, ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def generator_fingerprint(req: GeneratorRequest) -> str:
    return _digest({"role": "generator", **req.payload()})


def scorer_fingerprint(req: ScorerRequest) -> str:
    return _digest({"role": "scorer", **req.payload()})


class Backend(Protocol):
    backend_id: str

    def complete(self, req: GeneratorRequest) -> str: ...

    def token_logprobs(self, req: ScorerRequest) -> list[float]: ...


class ScriptedBackend:
    """Deterministic backend driven entirely by pre-registered responses.

    Unknown requests raise ScriptMiss: a miss signals a test gap, never a
    fallback to some default behaviour.
    """

    def __init__(self, backend_id: str = "scripted") -> None:
        self.backend_id = backend_id
        self._completions: dict[str, str] = {}
        self._logprobs: dict[str, list[float]] = {}

    def add_completion(self, req: GeneratorRequest, completion: str) -> None:
        self._completions[generator_fingerprint(req)] = completion

    def add_logprobs(self, req: ScorerRequest, logprobs: Sequence[float]) -> None:
        self._logprobs[scorer_fingerprint(req)] = list(logprobs)

    def complete(self, req: GeneratorRequest) -> str:
        key = generator_fingerprint(req)
        if key not in self._completions:
            raise ScriptMiss(
                f"no scripted completion for prompt starting "
                f"{req.prompt[:120]!r} (fingerprint {key[:12]})"
            )
        return self._completions[key]

    def token_logprobs(self, req: ScorerRequest) -> list[float]:
        key = scorer_fingerprint(req)
        if key not in self._logprobs:
            raise ScriptMiss(
                f"no scripted logprobs for continuation {req.continuation!r} "
                f"on prompt starting {req.prompt[:120]!r} (fingerprint {key[:12]})"
            )
        return list(self._logprobs[key])

    def to_file(self, path) -> None:
        payload = {
            "backend_id": self.backend_id,
            "completions": self._completions,
            "logprobs": self._logprobs,
        }
        Path(path).write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True), encoding="utf-8"
        )

    @classmethod
    def from_file(cls, path) -> "ScriptedBackend":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        backend = cls(backend_id=payload.get("backend_id", "scripted"))
        backend._completions = dict(payload["completions"])
        backend._logprobs = {k: list(v) for k, v in payload["logprobs"].items()}
        return backend


class HttpBackend:
    """OpenAI-compatible /completions client with echoed-logprobs scoring."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        timeout: float = 120.0,
        session: Optional[requests.Session] = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get("GENSCO_API_KEY")
        self.timeout = timeout
        self.session = session or requests.Session()
        self.backend_id = f"http:{self.base_url}:{model}"

    def _post(self, body: dict[str, Any]) -> dict[str, Any]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = self.session.post(
            f"{self.base_url}/completions", json=body, headers=headers, timeout=self.timeout
        )
        if resp.status_code == 400 and "context" in resp.text.lower():
            raise ContextOverflow(resp.text[:500])
        resp.raise_for_status()
        return resp.json()

    def complete(self, req: GeneratorRequest) -> str:
        body: dict[str, Any] = {
            "model": self.model,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        if req.stop_sequences:
            body["stop"] = list(req.stop_sequences)
        data = self._post(body)
        return data["choices"][0]["text"]

    def token_logprobs(self, req: ScorerRequest) -> list[float]:
        # Echo the full prompt+continuation and read back per-token
        # logprobs for the continuation span only.
        full = req.prompt + req.continuation
        body = {
            "model": self.model,
            "prompt": full,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
            "temperature": 0.0,
        }
        data = self._post(body)
        lp = data["choices"][0].get("logprobs")
        if not lp or lp.get("token_logprobs") is None:
            raise LogprobsUnsupported(
                f"backend {self.backend_id} returned no token logprobs"
            )
        offsets = lp.get("text_offset")
        logprobs = lp["token_logprobs"]
        if offsets is None:
            raise LogprobsUnsupported("backend returned logprobs without text offsets")
        cut = len(req.prompt)
        tail = [
            logp
            for off, logp in zip(offsets, logprobs)
            if off >= cut and logp is not None
        ]
        if not tail:
            raise LogprobsUnsupported("no continuation tokens covered by logprobs")
        return tail


class ResponseCache:
    """Content-addressed on-disk store keyed by request digest."""

    def __init__(self, cache_dir) -> None:
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[Any]:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, value: Any) -> None:
        path = self._path(key)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    json.dump(value, fh, ensure_ascii=False, sort_keys=True)
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)


class _MemoryCache:
    def __init__(self) -> None:
        self._store: dict[str, Any] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> Optional[Any]:
        return self._store.get(key)

    def put(self, key: str, value: Any) -> None:
        with self._lock:
            self._store[key] = value


def _truncate_at_stop(text: str, stop_sequences: Sequence[str]) -> str:
    cut = len(text)
    for stop in stop_sequences:
        pos = text.find(stop)
        if pos != -1:
            cut = min(cut, pos)
    return text[:cut]


class LlmGateway:
    """Front door for all LLM traffic: caching, retries, counters.

    Call counters are bucketed by purpose ("decomposition", "answer",
    "relevance", "stop") so a run manifest can audit the call budget.
    A semaphore bounds concurrent calls to external backends.
    """

    def __init__(
        self,
        generator: Backend,
        scorer: Backend,
        cache_dir=None,
        max_retries: int = 3,
        retry_base_delay: float = 0.5,
        max_in_flight: int = 8,
        record_exchanges: bool = False,
    ) -> None:
        self.generator = generator
        self.scorer = scorer
        self.cache = ResponseCache(cache_dir) if cache_dir else _MemoryCache()
        self.max_retries = max_retries
        self.retry_base_delay = retry_base_delay
        self._sem = threading.Semaphore(max_in_flight)
        self._lock = threading.Lock()
        self.record_exchanges = record_exchanges
        self.exchanges: list[LlmExchange] = []
        self.generator_calls: dict[str, int] = {}
        self.scorer_calls: dict[str, int] = {}
        self.cache_hits = 0
        self.cache_misses = 0

    def _count(self, table: dict[str, int], purpose: str, hit: bool) -> None:
        with self._lock:
            table[purpose] = table.get(purpose, 0) + 1
            if hit:
                self.cache_hits += 1
            else:
                self.cache_misses += 1

    def _with_retries(self, fn):
        attempt = 0
        while True:
            attempt += 1
            try:
                with self._sem:
                    return fn()
            except (requests.ConnectionError, requests.Timeout) as exc:
                if attempt >= self.max_retries:
                    raise BackendUnavailable(str(exc)) from exc
                time.sleep(self.retry_base_delay * (2 ** (attempt - 1)))

    def _record(
        self, role: str, request: dict[str, Any], response: Any, key: str,
        latency: float, from_cache: bool,
    ) -> None:
        if not self.record_exchanges:
            return
        with self._lock:
            self.exchanges.append(
                LlmExchange(role, request, response, key, latency, from_cache)
            )

    def generate(self, req: GeneratorRequest, purpose: str = "answer") -> str:
        if not req.prompt:
            raise ValueError("generator prompt must be non-empty")
        key = _digest(
            {"backend": self.generator.backend_id, "role": "generator", **req.payload()}
        )
        start = time.monotonic()
        cached = self.cache.get(key)
        if cached is not None:
            self._count(self.generator_calls, purpose, hit=True)
            text = cached["text"]
        else:
            raw = self._with_retries(lambda: self.generator.complete(req))
            text = _truncate_at_stop(raw, req.stop_sequences)
            self.cache.put(key, {"text": text})
            self._count(self.generator_calls, purpose, hit=False)
        self._record(
            "generator", req.payload(), text, key,
            time.monotonic() - start, cached is not None,
        )
        return text

    def score_continuation(
        self, req: ScorerRequest, purpose: str = "relevance"
    ) -> ScorerResponse:
        if not req.continuation:
            raise ValueError("scorer continuation must be non-empty")
        key = _digest(
            {"backend": self.scorer.backend_id, "role": "scorer", **req.payload()}
        )
        start = time.monotonic()
        cached = self.cache.get(key)
        if cached is not None:
            self._count(self.scorer_calls, purpose, hit=True)
            resp = ScorerResponse.from_dict(cached)
        else:
            logprobs = self._with_retries(lambda: self.scorer.token_logprobs(req))
            resp = ScorerResponse.from_logprobs(logprobs)
            self.cache.put(key, resp.to_dict())
            self._count(self.scorer_calls, purpose, hit=False)
        self._record(
            "scorer", req.payload(), resp.to_dict(), key,
            time.monotonic() - start, cached is not None,
        )
        return resp

    def stats(self) -> dict[str, Any]:
        with self._lock:
            return {
                "generator_calls": dict(self.generator_calls),
                "scorer_calls": dict(self.scorer_calls),
                "cache_hits": self.cache_hits,
                "cache_misses": self.cache_misses,
            }
