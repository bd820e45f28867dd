"""Chat-completion client for any OpenAI-compatible endpoint, plus a
deterministic mock provider used for tests and offline runs.

One wire dialect covers remote providers and local runtimes alike; the
provider name on a profile is metadata only. Reasoning traces are split off
either from a dedicated response field or from a leading think-tag block.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlparse

import httpx

from .errors import (
    ExhaustedError,
    MalformedResponseError,
    RemoteError,
    TransportError,
)

DEFAULT_TEMPERATURE = 0.7
DEFAULT_TOP_P = 0.9
DEFAULT_MAX_TOKENS = 4096
DEFAULT_MAX_CONCURRENCY = 4
DEFAULT_MAX_RETRIES = 3
DEFAULT_THINK_TAGS = ("<think>", "</think>")

_ENV_REF = re.compile(r"^\$\{([A-Za-z_][A-Za-z0-9_]*)\}$")


@dataclass(frozen=True)
class ModelProfile:
    name: str
    endpoint_url: str
    model_name: str
    provider_name: str = "openai-compatible"
    api_key: str = ""
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS
    max_concurrency: int = DEFAULT_MAX_CONCURRENCY
    max_retries: int = DEFAULT_MAX_RETRIES

    def __post_init__(self):
        if not self.name:
            raise ValueError("profile name must be non-empty")
        parsed = urlparse(self.endpoint_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"endpoint_url does not parse: {self.endpoint_url!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.max_concurrency <= 0:
            raise ValueError("max_concurrency must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")

    def resolve_api_key(self) -> str:
        """Expand a ${VAR} reference against the environment."""
        match = _ENV_REF.match(self.api_key)
        if match:
            return os.environ.get(match.group(1), "")
        return self.api_key


# Stand-in for projects created without explicit profiles; points at a local
# OpenAI-compatible runtime and is meant to be replaced before real runs.
PLACEHOLDER_PROFILE = ModelProfile(
    name="default",
    endpoint_url="http://127.0.0.1:8080/v1",
    model_name="default-model",
)


@dataclass(frozen=True)
class ChatRequest:
    user: str
    system: str | None = None
    overrides: dict | None = None  # partial temperature/top_p/max_tokens

    def __post_init__(self):
        if not self.user:
            raise ValueError("user message must be non-empty")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    reasoning: str | None = None
    usage: dict | None = None
    latency_ms: float = 0.0
    retries: int = 0


def split_think(content: str, tags: tuple[str, str] = DEFAULT_THINK_TAGS) -> tuple[str | None, str]:
    """Split a leading think-tag block off the content.

    Returns (reasoning, remaining_content); reasoning is None when the
    content does not start with the open tag.
    """
    open_tag, close_tag = tags
    stripped = content.lstrip()
    if not stripped.startswith(open_tag):
        return None, content
    end = stripped.find(close_tag, len(open_tag))
    if end == -1:
        return None, content
    reasoning = stripped[len(open_tag) : end].strip()
    remainder = stripped[end + len(close_tag) :].lstrip()
    return reasoning, remainder


def _sampling(profile: ModelProfile, req: ChatRequest) -> dict:
    params = {
        "temperature": profile.temperature,
        "top_p": profile.top_p,
        "max_tokens": profile.max_tokens,
    }
    if req.overrides:
        unknown = set(req.overrides) - set(params)
        if unknown:
            raise ValueError(f"unknown sampling overrides: {sorted(unknown)}")
        params.update(req.overrides)
    return params


def build_request_body(profile: ModelProfile, req: ChatRequest) -> dict:
    messages = []
    if req.system:
        messages.append({"role": "system", "content": req.system})
    messages.append({"role": "user", "content": req.user})
    return {"model": profile.model_name, "messages": messages, **_sampling(profile, req)}


class _BatchMixin:
    """Order-preserving batch execution with per-item error isolation."""

    def complete_batch(self, profile: ModelProfile, reqs: list[ChatRequest]) -> list:
        if not reqs:
            raise ValueError("reqs must be non-empty")
        results: list = [None] * len(reqs)

        def run(idx: int, req: ChatRequest):
            try:
                results[idx] = self.complete(profile, req)
            except Exception as exc:  # per-item failures stay in the batch
                results[idx] = exc

        with ThreadPoolExecutor(max_workers=profile.max_concurrency) as pool:
            futures = [pool.submit(run, i, r) for i, r in enumerate(reqs)]
            for fut in futures:
                fut.result()
        return results


class HttpLlmClient(_BatchMixin):
    """Client for the chat-completions JSON dialect with retry/backoff.

    429 and 5xx responses are retried with exponential backoff (base 1 s,
    factor 2, jitter) up to profile.max_retries; other 4xx fail immediately.
    A per-profile semaphore caps in-flight requests at max_concurrency even
    when callers bring their own threads.
    """

    def __init__(
        self,
        timeout: float = 120.0,
        think_tags: tuple[str, str] = DEFAULT_THINK_TAGS,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
        rng: random.Random | None = None,
        backoff_base: float = 1.0,
    ):
        self.think_tags = think_tags
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._backoff_base = backoff_base
        self._client = httpx.Client(timeout=timeout, transport=transport, trust_env=True)
        self._limiters: dict[str, threading.BoundedSemaphore] = {}
        self._limiter_guard = threading.Lock()

    def close(self):
        self._client.close()

    def _limiter(self, profile: ModelProfile) -> threading.BoundedSemaphore:
        with self._limiter_guard:
            if profile.name not in self._limiters:
                self._limiters[profile.name] = threading.BoundedSemaphore(
                    profile.max_concurrency
                )
            return self._limiters[profile.name]

    @staticmethod
    def _endpoint(profile: ModelProfile) -> str:
        url = profile.endpoint_url.rstrip("/")
        if url.endswith("/chat/completions"):
            return url
        return url + "/chat/completions"

    def _backoff_delay(self, attempt: int) -> float:
        # monotone in attempt; jitter only ever adds
        return self._backoff_base * (2**attempt) * (1 + 0.25 * self._rng.random())

    def complete(self, profile: ModelProfile, req: ChatRequest) -> ChatResponse:
        body = build_request_body(profile, req)
        headers = {"Content-Type": "application/json"}
        api_key = profile.resolve_api_key()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        url = self._endpoint(profile)

        started = time.monotonic()
        retries = 0
        with self._limiter(profile):
            while True:
                try:
                    resp = self._client.post(url, json=body, headers=headers)
                except httpx.HTTPError as exc:
                    raise TransportError(f"request to {url} failed: {exc}") from exc
                if resp.status_code == 200:
                    break
                if resp.status_code == 429 or resp.status_code >= 500:
                    if retries >= profile.max_retries:
                        raise ExhaustedError(
                            f"gave up after {retries} retries; "
                            f"last status {resp.status_code}"
                        )
                    self._sleep(self._backoff_delay(retries))
                    retries += 1
                    continue
                raise RemoteError(
                    f"endpoint returned {resp.status_code}",
                    status=resp.status_code,
                    body=resp.text,
                )
        latency_ms = (time.monotonic() - started) * 1000.0
        return self._parse_response(resp, latency_ms, retries)

    def _parse_response(self, resp: httpx.Response, latency_ms: float, retries: int) -> ChatResponse:
        try:
            payload = resp.json()
            choice = payload["choices"][0]
            message = choice["message"]
            content = message["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected response shape: {exc}") from exc
        if content is None:
            raise MalformedResponseError("response content is null")
        reasoning = message.get("reasoning_content") or message.get("reasoning")
        if reasoning is None:
            reasoning, content = split_think(content, self.think_tags)
        usage = payload.get("usage")
        return ChatResponse(
            content=content,
            reasoning=reasoning,
            usage=usage,
            latency_ms=latency_ms,
            retries=retries,
        )


# --- deterministic mock -----------------------------------------------------

_STAGE_MARKERS = [
    ("personas", "propose exactly"),
    ("questions", "Write questions that can be answered solely from the source text"),
    ("answer", "Answer the question using only the source text"),
    ("refine", "Improve the following answer"),
    ("judge", "Please act as an impartial evaluator"),
]

_STAGE_FIXTURES = {
    "personas": "personas.json",
    "questions": "questions.json",
    "answer": "answer.txt",
    "refine": "refine.txt",
    "judge": "judge.json",
    "candidate": "candidate.txt",
}

_EXACTLY_N = re.compile(r"exactly (\d+)")


class MockLlmClient(_BatchMixin):
    """Offline provider with reproducible, content-derived responses.

    The pipeline stage is recognized from marker phrases in the shipped
    prompt templates. A fixture directory may override any stage with a
    canned response file; otherwise the response is synthesized from a
    digest of (seed, stage, prompt) so identical runs produce identical
    bytes. Every request is recorded for prompt-inspection tests.
    """

    def __init__(
        self,
        seed: int = 0,
        fixture_dir: str | Path | None = None,
        think_tags: tuple[str, str] = DEFAULT_THINK_TAGS,
    ):
        self.seed = seed
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None
        self.think_tags = think_tags
        self.requests: list[tuple[ModelProfile, ChatRequest]] = []
        self._record_guard = threading.Lock()

    @staticmethod
    def _stage(prompt: str) -> str:
        for stage, marker in _STAGE_MARKERS:
            if marker in prompt:
                return stage
        return "candidate"

    def _fixture_text(self, stage: str) -> str | None:
        if self.fixture_dir is None:
            return None
        path = self.fixture_dir / _STAGE_FIXTURES[stage]
        if path.exists():
            return path.read_text(encoding="utf-8")
        return None

    def _digest(self, stage: str, prompt: str, salt: str = "") -> str:
        raw = f"{self.seed}|{stage}|{salt}|{prompt}".encode("utf-8")
        return hashlib.sha256(raw).hexdigest()[:10]

    def _synthesize(self, stage: str, prompt: str) -> str:
        digest = self._digest(stage, prompt)
        match = _EXACTLY_N.search(prompt)
        n = int(match.group(1)) if match else 3
        if stage == "personas":
            items = []
            for i in range(n):
                tag = self._digest(stage, prompt, salt=str(i))
                items.append(
                    {
                        "genre": {
                            "name": f"Angle {tag}",
                            "description": f"Questions framed around theme {tag}.",
                        },
                        "audience": {
                            "name": f"Readers {tag}",
                            "description": f"People who care about theme {tag}.",
                        },
                    }
                )
            return json.dumps(items, ensure_ascii=False, indent=2)
        if stage == "questions":
            questions = [
                f"What does the source say about item {self._digest(stage, prompt, salt=str(i))}?"
                for i in range(n)
            ]
            return json.dumps(questions, ensure_ascii=False, indent=2)
        if stage == "answer":
            return (
                f"<think>Checked the source for marker {digest}.</think>"
                f"According to the source material, the point tagged {digest} "
                f"is addressed directly and holds as stated."
            )
        if stage == "refine":
            return (
                f"<think>Tightened wording; facts unchanged ({digest}).</think>"
                f"In short, the point tagged {digest} is addressed directly in "
                f"the source and holds as stated."
            )
        if stage == "judge":
            score = int(digest, 16) % 6
            return f'[{{"correctness": "{score}"}}]'
        return f"The answer hinges on item {digest}."

    def complete(self, profile: ModelProfile, req: ChatRequest) -> ChatResponse:
        with self._record_guard:
            self.requests.append((profile, req))
        prompt = (req.system or "") + "\n" + req.user
        stage = self._stage(prompt)
        content = self._fixture_text(stage)
        if content is None:
            content = self._synthesize(stage, prompt)
        reasoning, content = split_think(content, self.think_tags)
        return ChatResponse(content=content, reasoning=reasoning, latency_ms=0.0)
