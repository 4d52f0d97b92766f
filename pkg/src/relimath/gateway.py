"""Uniform access to chat-completion endpoints with caching and a deterministic mock.

The wire protocol is the common chat-completions shape: POST to
``{base_url}/chat/completions`` with model/messages/temperature/top_p/
max_tokens and a bearer token read from the endpoint's environment variable.
Responses that carry a separate reasoning field are folded into the raw text
as a ``<think>...</think>`` span so downstream code sees one string and can
still split off the post-reasoning suffix.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import requests

from .errors import GatewayError, MockMissError
from .matching import THINK_CLOSE, THINK_OPEN, post_reasoning_text

logger = logging.getLogger(__name__)

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class EndpointRole(str, Enum):
    INSTRUCTION = "instruction"
    REASONING = "reasoning"
    TEACHER = "teacher"
    STUDENT = "student"


@dataclass(frozen=True)
class ModelEndpoint:
    """One model endpoint plus its default sampling parameters."""

    role: EndpointRole
    model_name: str
    base_url: str = ""
    auth_env_var: str = ""
    max_output_tokens: int = 4096
    temperature: float = 0.0
    top_p: float = 1.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")

    @property
    def is_greedy(self) -> bool:
        return self.temperature == 0


@dataclass(frozen=True)
class CompletionRequest:
    """A prompt plus optional per-request sampling overrides."""

    prompt: str
    sample_index: int = 0
    temperature: float | None = None
    top_p: float | None = None
    max_tokens: int | None = None

    def params(self, endpoint: ModelEndpoint) -> dict:
        return {
            "temperature": self.temperature if self.temperature is not None else endpoint.temperature,
            "top_p": self.top_p if self.top_p is not None else endpoint.top_p,
            "max_tokens": self.max_tokens if self.max_tokens is not None else endpoint.max_output_tokens,
        }


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: str = "stop"
    elapsed_ms: float = 0.0
    from_cache: bool = False
    retries: int = 0

    @property
    def answer_text(self) -> str:
        """Suffix after any reasoning span; the full text stays in ``text``."""
        return post_reasoning_text(self.text)

    @property
    def truncated(self) -> bool:
        return self.finish_reason == "length"


def request_hash(endpoint: ModelEndpoint, request: CompletionRequest) -> str:
    """Content address of a request; sample_index participates so K-sampling caches correctly."""
    params = request.params(endpoint)
    payload = json.dumps(
        {
            "model": endpoint.model_name,
            "prompt": request.prompt,
            "temperature": params["temperature"],
            "top_p": params["top_p"],
            "max_tokens": params["max_tokens"],
            "sample_index": request.sample_index,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CompletionCache:
    """Content-addressed on-disk store, one JSON file per request hash."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> Completion | None:
        path = self._path(key)
        if not path.is_file():
            return None
        obj = json.loads(path.read_text(encoding="utf-8"))
        return Completion(
            text=obj["text"],
            finish_reason=obj.get("finish_reason", "stop"),
            elapsed_ms=obj.get("elapsed_ms", 0.0),
            from_cache=True,
            retries=obj.get("retries", 0),
        )

    def put(self, key: str, completion: Completion) -> None:
        payload = json.dumps(
            {
                "text": completion.text,
                "finish_reason": completion.finish_reason,
                "elapsed_ms": completion.elapsed_ms,
                "retries": completion.retries,
            },
            ensure_ascii=False,
        )
        with self._lock:
            tmp = self._path(key).with_suffix(".tmp")
            tmp.write_text(payload, encoding="utf-8")
            os.replace(tmp, self._path(key))


@dataclass
class RetryPolicy:
    """Retries apply to transport errors and retryable statuses only."""

    max_retries: int = 3
    backoff_base: float = 1.0
    jitter: float = 0.5
    timeout: float = 600.0

    def sleep_for(self, attempt: int) -> float:
        return self.backoff_base * (2**attempt) + random.uniform(0, self.backoff_base * self.jitter)


class HttpBackend:
    """Chat-completions client over HTTP."""

    def __init__(self, retry: RetryPolicy | None = None, session: requests.Session | None = None):
        self.retry = retry or RetryPolicy()
        self.session = session or requests.Session()

    def generate(self, endpoint: ModelEndpoint, request: CompletionRequest) -> Completion:
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        params = request.params(endpoint)
        body = {
            "model": endpoint.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": params["temperature"],
            "top_p": params["top_p"],
            "max_tokens": params["max_tokens"],
        }
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(endpoint.auth_env_var, "") if endpoint.auth_env_var else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        start = time.monotonic()
        last_error: str | None = None
        for attempt in range(self.retry.max_retries + 1):
            if attempt:
                time.sleep(self.retry.sleep_for(attempt - 1))
            try:
                response = self.session.post(
                    url, json=body, headers=headers, timeout=self.retry.timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                logger.warning("request to %s failed (attempt %d): %s", url, attempt + 1, exc)
                continue
            if response.status_code in RETRYABLE_STATUSES:
                last_error = f"status {response.status_code}"
                logger.warning("retryable status %d from %s", response.status_code, url)
                continue
            if response.status_code != 200:
                raise GatewayError(
                    f"endpoint error {response.status_code}: {response.text[:500]}",
                    status=response.status_code,
                    retries=attempt,
                )
            elapsed_ms = (time.monotonic() - start) * 1000
            return self._parse_response(response.json(), elapsed_ms, retries=attempt)
        raise GatewayError(
            f"request failed after {self.retry.max_retries} retries: {last_error}",
            retries=self.retry.max_retries,
        )

    @staticmethod
    def _parse_response(payload: dict, elapsed_ms: float, retries: int) -> Completion:
        try:
            choice = payload["choices"][0]
            message = choice.get("message", {})
            content = message.get("content") or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed completion payload: {exc}") from exc
        reasoning = message.get("reasoning_content") or message.get("reasoning")
        if reasoning and THINK_OPEN not in content:
            content = f"{THINK_OPEN}{reasoning}{THINK_CLOSE}{content}"
        return Completion(
            text=content,
            finish_reason=choice.get("finish_reason") or "stop",
            elapsed_ms=elapsed_ms,
            retries=retries,
        )


@dataclass
class MockRule:
    """Match by substring(s) or exact prompt hash; yield a canned output.

    Rules are evaluated first-match-wins. ``outputs`` maps sample_index ->
    text for K-sampling scripts; ``error`` makes the matched call fail (for
    isolation tests).
    """

    contains: str | None = None
    contains_all: list[str] | None = None
    prompt_sha256: str | None = None
    output: str | None = None
    outputs: list[str] | None = None
    error: str | None = None
    finish_reason: str = "stop"

    def matches(self, prompt: str) -> bool:
        if self.contains is not None and self.contains in prompt:
            return True
        if self.contains_all is not None and all(part in prompt for part in self.contains_all):
            return True
        if self.prompt_sha256 is not None:
            return hashlib.sha256(prompt.encode("utf-8")).hexdigest() == self.prompt_sha256
        return False

    def resolve(self, sample_index: int) -> str:
        if self.error is not None:
            raise GatewayError(f"scripted failure: {self.error}")
        if self.outputs is not None:
            if sample_index >= len(self.outputs):
                raise MockMissError(
                    f"rule has {len(self.outputs)} outputs but sample_index={sample_index}"
                )
            return self.outputs[sample_index]
        if self.output is None:
            raise MockMissError("rule matched but provides no output")
        return self.output


class MockBackend:
    """Fully deterministic scripted backend; records every prompt it serves."""

    def __init__(self, rules: list[MockRule] | None = None, default: str | None = None,
                 strict: bool = True):
        self.rules = list(rules or [])
        self.default = default
        self.strict = strict
        self.calls: list[str] = []
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def add(self, **kwargs) -> MockRule:
        rule = MockRule(**kwargs)
        self.rules.append(rule)
        return rule

    def generate(self, endpoint: ModelEndpoint, request: CompletionRequest) -> Completion:
        with self._lock:
            self.calls.append(request.prompt)
        for rule in self.rules:
            if rule.matches(request.prompt):
                text = rule.resolve(request.sample_index)
                return Completion(text=text, finish_reason=rule.finish_reason)
        if self.default is not None and not self.strict:
            return Completion(text=self.default)
        digest = hashlib.sha256(request.prompt.encode("utf-8")).hexdigest()
        raise MockMissError(f"no mock rule matches prompt sha256={digest}")

    @classmethod
    def from_script(cls, script: dict) -> "MockBackend":
        rules = [MockRule(**rule) for rule in script.get("rules", [])]
        return cls(
            rules=rules,
            default=script.get("default"),
            strict=script.get("strict", True),
        )


@dataclass
class BatchItem:
    """Positional result of a batched completion; exactly one side is set."""

    completion: Completion | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.completion is not None


class Client:
    """One endpoint bound to a backend, with optional response caching."""

    def __init__(self, endpoint: ModelEndpoint, backend, cache: CompletionCache | None = None):
        self.endpoint = endpoint
        self.backend = backend
        self.cache = cache

    def complete(self, request: CompletionRequest | str) -> Completion:
        if isinstance(request, str):
            request = CompletionRequest(prompt=request)
        if not request.prompt:
            raise GatewayError("prompt must be non-empty")
        key = request_hash(self.endpoint, request)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return cached
        completion = self.backend.generate(self.endpoint, request)
        if self.cache is not None:
            self.cache.put(key, completion)
        return completion

    def complete_many(self, requests_list: list[CompletionRequest], max_in_flight: int = 4) -> list[BatchItem]:
        """Run a batch with bounded concurrency; output order matches input order."""
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if not requests_list:
            return []
        results: list[BatchItem] = [BatchItem() for _ in requests_list]

        def run(index: int, request: CompletionRequest) -> None:
            try:
                results[index] = BatchItem(completion=self.complete(request))
            except GatewayError as exc:
                results[index] = BatchItem(error=str(exc))

        with ThreadPoolExecutor(max_workers=min(max_in_flight, len(requests_list))) as pool:
            futures = [pool.submit(run, i, req) for i, req in enumerate(requests_list)]
            for future in futures:
                future.result()
        return results

    def greedy(self) -> "Client":
        """A view of this client with temperature forced to zero."""
        if self.endpoint.temperature == 0:
            return self
        return Client(replace(self.endpoint, temperature=0.0), self.backend, self.cache)
