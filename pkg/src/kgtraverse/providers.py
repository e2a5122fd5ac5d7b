"""Text-generation providers used for planning and answering.

Every provider takes a :class:`ChatRequest` and returns a :class:`Completion` with
token usage. Offline providers estimate usage with :func:`estimate_tokens`.
"""

from __future__ import annotations

import json
import logging
import math
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import httpx

log = logging.getLogger(__name__)


class ProviderError(RuntimeError):
    """Transport, auth or protocol failure talking to a provider."""


class ScriptExhausted(ProviderError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    purpose: str  # "plan", "answer" or "judge"
    query: str = ""
    context: str | None = None

    @property
    def messages(self) -> list[dict]:
        return [{"role": "user", "content": self.prompt}]


@dataclass(frozen=True)
class Completion:
    text: str
    input_tokens: int
    output_tokens: int


class Provider(Protocol):
    def complete(self, request: ChatRequest) -> Completion: ...


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def _offline(request: ChatRequest, text: str) -> Completion:
    return Completion(text, estimate_tokens(request.prompt), estimate_tokens(text))


class ChatCompletionClient:
    """HTTP chat-completion client with transport-level retry.

    Sends ``{"model", "messages", "temperature"}`` and reads the reply from
    ``choices[0].message.content`` (or a top-level ``content``/``text``), usage from
    ``usage.prompt_tokens``/``completion_tokens`` or ``input_tokens``/``output_tokens``.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        token: str | None = None,
        temperature: float = 0.0,
        attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.attempts = attempts
        self.backoff = backoff
        self._headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def complete(self, request: ChatRequest) -> Completion:
        body = {"model": self.model, "messages": request.messages, "temperature": self.temperature}
        last: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.endpoint, json=body, headers=self._headers)
            except httpx.TransportError as exc:
                last = exc
                log.warning("chat request to %s failed (attempt %d): %s", self.endpoint, attempt + 1, exc)
                continue
            if resp.status_code in (401, 403):
                raise ProviderError(f"provider {self.endpoint} rejected credentials (HTTP {resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last = ProviderError(f"HTTP {resp.status_code}")
                log.warning("chat request to %s got HTTP %d (attempt %d)", self.endpoint, resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise ProviderError(f"provider {self.endpoint} returned HTTP {resp.status_code}: {resp.text[:200]}")
            return self._parse(resp, request)
        raise ProviderError(f"provider {self.endpoint} failed after {self.attempts} attempts: {last}")

    def _parse(self, resp: httpx.Response, request: ChatRequest) -> Completion:
        try:
            doc = resp.json()
            if "choices" in doc:
                text = doc["choices"][0]["message"]["content"]
            else:
                text = doc.get("content", doc.get("text"))
            if not isinstance(text, str):
                raise TypeError("no text content")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"provider {self.endpoint} sent an unreadable response: {exc}") from exc
        usage = doc.get("usage") or {}
        inp = usage.get("prompt_tokens", usage.get("input_tokens"))
        out = usage.get("completion_tokens", usage.get("output_tokens"))
        if inp is None or out is None:
            log.warning("provider %s reported no usage; estimating from characters", self.endpoint)
            inp = estimate_tokens(request.prompt) if inp is None else inp
            out = estimate_tokens(text) if out is None else out
        return Completion(text, int(inp), int(out))


class ScriptedProvider:
    """Replays a fixed sequence of responses and records every request it sees."""

    def __init__(self, responses: Sequence[str | Completion]):
        self._responses = list(responses)
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedProvider:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(doc, Mapping):
            doc = doc["responses"]
        out = []
        for item in doc:
            if isinstance(item, str):
                out.append(item)
            else:
                out.append(Completion(item["text"], item["input_tokens"], item["output_tokens"]))
        return cls(out)

    @property
    def calls(self) -> int:
        return len(self.requests)

    def complete(self, request: ChatRequest) -> Completion:
        with self._lock:
            idx = len(self.requests)
            self.requests.append(request)
            if idx >= len(self._responses):
                raise ScriptExhausted(f"scripted provider has only {len(self._responses)} responses")
            item = self._responses[idx]
        return item if isinstance(item, Completion) else _offline(request, item)


@dataclass(frozen=True)
class PlanTemplate:
    pattern: re.Pattern
    plan: dict
    rationale: str | None = None


def _fill(value, groups: Mapping[str, str]):
    if isinstance(value, str):
        for k, v in groups.items():
            value = value.replace("{" + k + "}", v)
        return value
    if isinstance(value, list):
        return [_fill(v, groups) for v in value]
    if isinstance(value, dict):
        return {k: _fill(v, groups) for k, v in value.items()}
    return value


class TemplatePlanner:
    """Rule-based planner: the first template whose regex matches the query yields the plan.

    Unmatched queries get a plain-text refusal, which the plan parser rejects.
    """

    def __init__(self, templates: Sequence[PlanTemplate]):
        self.templates = list(templates)

    @classmethod
    def from_file(cls, path: str | Path | None = None, domain: str = "academic") -> TemplatePlanner:
        if path is None:
            text = resources.files("kgtraverse.data").joinpath(f"templates_{domain}.json").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        out = []
        for item in json.loads(text):
            out.append(PlanTemplate(re.compile(item["pattern"], re.IGNORECASE), item["steps"], item.get("rationale")))
        return cls(out)

    def complete(self, request: ChatRequest) -> Completion:
        query = request.query.strip()
        for tpl in self.templates:
            m = tpl.pattern.fullmatch(query)
            if m is None:
                continue
            groups = {k: v.strip() for k, v in m.groupdict().items() if v is not None}
            doc = {"query": request.query}
            if tpl.rationale:
                doc["rationale"] = _fill(tpl.rationale, groups)
            doc["steps"] = _fill(tpl.plan, groups)
            return _offline(request, json.dumps(doc, indent=2, ensure_ascii=False))
        return _offline(request, "No template matches this question; I cannot produce a plan.")


class EchoAnswerer:
    """Answers with the retrieved context itself.

    With ``keys`` set, only the values of those attribute lines are kept, joined by "; ".
    """

    def __init__(self, keys: Sequence[str] | None = None):
        self.keys = tuple(keys) if keys else None

    def complete(self, request: ChatRequest) -> Completion:
        context = request.context or ""
        if self.keys is None:
            return _offline(request, context)
        values = []
        for line in context.splitlines():
            key, sep, value = line.partition(": ")
            if sep and key in self.keys:
                values.append(value)
        return _offline(request, "; ".join(values) if values else context)


class RoutingProvider:
    """Sends planning requests to one provider and everything else to another."""

    def __init__(self, planner: Provider, answerer: Provider):
        self.planner = planner
        self.answerer = answerer
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, request: ChatRequest) -> Completion:
        with self._lock:
            self.calls += 1
        target = self.planner if request.purpose == "plan" else self.answerer
        return target.complete(request)


@dataclass
class CountingProvider:
    """Wraps a provider and counts calls per purpose."""

    inner: Provider
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self._lock = threading.Lock()

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def complete(self, request: ChatRequest) -> Completion:
        with self._lock:
            self.counts[request.purpose] = self.counts.get(request.purpose, 0) + 1
        return self.inner.complete(request)
