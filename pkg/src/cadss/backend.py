"""Chat-completion backend abstraction.

Every LLM role in the toolkit (generator, modifier, reviewer, judger, the four
chat agents, plausibility judge) speaks the same messages-in/text-out protocol.
Production traffic goes through :class:`HTTPBackend` (OpenAI-style chat
completions with bearer auth); tests use :class:`ScriptedBackend`, a
deterministic double that records every request it serves.
"""
from __future__ import annotations

import logging
import os
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import httpx

logger = logging.getLogger(__name__)

ROLE_TAGS = (
    "generator",
    "modifier",
    "reviewer",
    "judger",
    "profiler",
    "summarizer",
    "planner",
    "supporter",
    "plausibility_judge",
)

# scoring roles must be stable; generative roles get some temperature
DEFAULT_TEMPERATURES = {
    "reviewer": 0.0,
    "judger": 0.0,
    "plausibility_judge": 0.0,
    "planner": 0.0,
    "profiler": 0.0,
    "summarizer": 0.3,
    "generator": 0.7,
    "modifier": 0.7,
    "supporter": 0.7,
}


class BackendError(Exception):
    """Base class for backend failures."""


class BackendTimeout(BackendError):
    pass


class RateLimited(BackendError):
    pass


class ProtocolError(BackendError):
    pass


class AuthError(BackendError):
    pass


class ScriptExhausted(BackendError):
    """No scripted rule matched the incoming request."""


@dataclass(frozen=True)
class ChatMessage:
    speaker: str  # system_prompt | user | assistant
    text: str


@dataclass(frozen=True)
class ChatRequest:
    role_tag: str
    messages: Tuple[ChatMessage, ...]
    temperature: float = 0.7
    max_output_tokens: int = 1024
    request_id: str = ""

    def __post_init__(self):
        if self.role_tag not in ROLE_TAGS:
            raise ValueError(f"unknown role_tag {self.role_tag!r}")
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].speaker != "system_prompt":
            raise ValueError("first message must be the system prompt")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if not self.request_id:
            object.__setattr__(self, "request_id", uuid.uuid4().hex)

    @property
    def last_text(self) -> str:
        return self.messages[-1].text


def make_request(role_tag: str, system_prompt: str, user_text: str, **kwargs) -> ChatRequest:
    """Convenience constructor for the common system-prompt + single-user-turn shape."""
    kwargs.setdefault("temperature", DEFAULT_TEMPERATURES.get(role_tag, 0.7))
    return ChatRequest(
        role_tag=role_tag,
        messages=(
            ChatMessage("system_prompt", system_prompt),
            ChatMessage("user", user_text),
        ),
        **kwargs,
    )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_name: str
    latency: float = 0.0
    truncated: bool = False


@dataclass(frozen=True)
class BackendConfig:
    """HTTP endpoint description. The credential itself never lives here,
    only the name of the environment variable that holds it."""

    name: str
    endpoint: str
    api_key_env: Optional[str] = None
    model: Optional[str] = None
    timeout: float = 60.0
    max_retries: int = 2
    backoff_initial: float = 0.5
    backoff_multiplier: float = 2.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class Backend:
    """Protocol: anything with a ``complete(ChatRequest) -> ChatResponse``."""

    name = "backend"

    def complete(self, req: ChatRequest) -> ChatResponse:
        raise NotImplementedError


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class HTTPBackend(Backend):
    """OpenAI-style chat completion endpoint with bounded retry."""

    def __init__(self, cfg: BackendConfig, client: Optional[httpx.Client] = None):
        self.cfg = cfg
        self.name = cfg.name
        self._client = client or httpx.Client(timeout=cfg.timeout)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, req: ChatRequest) -> dict:
        role_map = {"system_prompt": "system", "user": "user", "assistant": "assistant"}
        payload = {
            "messages": [{"role": role_map[m.speaker], "content": m.text} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        if self.cfg.model:
            payload["model"] = self.cfg.model
        return payload

    def complete(self, req: ChatRequest) -> ChatResponse:
        start = time.monotonic()
        attempts = 1 + self.cfg.max_retries
        backoff = self.cfg.backoff_initial
        last_error: Optional[BackendError] = None
        for attempt in range(attempts):
            if attempt > 0:
                time.sleep(backoff)
                backoff *= self.cfg.backoff_multiplier
            try:
                resp = self._client.post(
                    self.cfg.endpoint, json=self._payload(req), headers=self._headers()
                )
            except httpx.TimeoutException as exc:
                last_error = BackendTimeout(f"{self.name}: timeout ({exc})")
                continue
            except httpx.TransportError as exc:
                last_error = ProtocolError(f"{self.name}: transport error ({exc})")
                continue

            if resp.status_code in (401, 403):
                raise AuthError(f"{self.name}: authentication failed ({resp.status_code})")
            if resp.status_code in _RETRYABLE_STATUS:
                err = RateLimited if resp.status_code == 429 else ProtocolError
                last_error = err(f"{self.name}: status {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"{self.name}: unexpected status {resp.status_code}")

            try:
                body = resp.json()
                choice = body["choices"][0]
                text = choice["message"]["content"]
                truncated = choice.get("finish_reason") == "length"
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise ProtocolError(f"{self.name}: malformed response body ({exc})") from exc
            logger.debug("backend=%s request_id=%s attempts=%d", self.name, req.request_id, attempt + 1)
            return ChatResponse(
                text=text.rstrip(),
                backend_name=self.name,
                latency=time.monotonic() - start,
                truncated=truncated,
            )
        assert last_error is not None
        raise last_error


Reply = Union[str, Callable[[ChatRequest], str]]


@dataclass
class ScriptRule:
    """Matches on role_tag and/or a substring of the request's last message."""

    reply: Reply
    role_tag: Optional[str] = None
    contains: Optional[str] = None
    max_uses: Optional[int] = None  # None = unlimited
    uses: int = field(default=0, init=False)

    def matches(self, req: ChatRequest) -> bool:
        if self.max_uses is not None and self.uses >= self.max_uses:
            return False
        if self.role_tag is not None and req.role_tag != self.role_tag:
            return False
        if self.contains is not None and self.contains not in req.last_text:
            return False
        return True


class ScriptedBackend(Backend):
    """Deterministic test double: first matching rule answers; everything served
    is appended to ``transcript`` for assertions."""

    def __init__(self, rules: Sequence[ScriptRule], name: str = "scripted"):
        if not rules:
            raise ValueError("script must be non-empty")
        self.rules = list(rules)
        self.name = name
        self.transcript: List[ChatRequest] = []

    def complete(self, req: ChatRequest) -> ChatResponse:
        self.transcript.append(req)
        for rule in self.rules:
            if rule.matches(req):
                rule.uses += 1
                text = rule.reply(req) if callable(rule.reply) else rule.reply
                return ChatResponse(text=text, backend_name=self.name)
        raise ScriptExhausted(
            f"{self.name}: no rule for role={req.role_tag!r} last={req.last_text[:80]!r}"
        )

    def requests_for(self, role_tag: str) -> List[ChatRequest]:
        return [r for r in self.transcript if r.role_tag == role_tag]


class FnBackend(Backend):
    """Stateless backend computing every reply from the request alone."""

    def __init__(self, fn: Callable[[ChatRequest], str], name: str = "fn"):
        self._fn = fn
        self.name = name
        self.transcript: List[ChatRequest] = []

    def complete(self, req: ChatRequest) -> ChatResponse:
        self.transcript.append(req)
        return ChatResponse(text=self._fn(req), backend_name=self.name)
