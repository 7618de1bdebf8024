"""Generation backends: live HTTP endpoint, scripted mock, record/replay.

Every backend exposes ``generate(request) -> GenerationResponse``.  The HTTP
backend speaks the OpenAI-compatible completions/chat-completions JSON
protocol; the scripted mock replays canned responses keyed by call order
within a question (or, in strict mode, by request digest); the cassette pair
records live traffic to JSONL and replays it byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol

from .prompting import ERRORFIX_REQUEST, TODO_PREFIX, Prompt


class BackendUnavailable(RuntimeError):
    """The live backend could not be reached after all retries."""


class ScriptExhausted(RuntimeError):
    """The scripted or replay backend has no response left for this call."""


class ContextOverflow(RuntimeError):
    """The prompt does not fit in the backend's context window."""


class UnknownTokenizer(ValueError):
    """No tokenizer registered under the requested id."""


@dataclass(frozen=True)
class GenerationRequest:
    """One generation call; sampling knobs are passed through verbatim."""

    prompt: Prompt
    temperature: float = 0.0
    top_p: float = 0.9
    max_tokens: int = 1024
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))


@dataclass(frozen=True)
class GenerationResponse:
    """Completion text plus reported usage (0 when the backend has none)."""

    text: str
    prompt_token_count: int = 0
    completion_token_count: int = 0
    backend_id: str = ""

    def __post_init__(self) -> None:
        if self.prompt_token_count < 0 or self.completion_token_count < 0:
            raise ValueError("token counts must be >= 0")


class Backend(Protocol):
    backend_id: str

    def generate(self, request: GenerationRequest) -> GenerationResponse: ...


def prompt_text(prompt: Prompt) -> str:
    """Prompt content as plain text (role messages joined by newlines)."""
    if isinstance(prompt, str):
        return prompt
    return "\n".join(m.content for m in prompt)


def request_payload(request: GenerationRequest) -> dict:
    """Canonical JSON-ready form of a request, used for digests and cassettes."""
    if isinstance(request.prompt, str):
        prompt_part: dict = {"prompt": request.prompt}
    else:
        prompt_part = {
            "messages": [{"role": m.role, "content": m.content} for m in request.prompt]
        }
    return {
        **prompt_part,
        "temperature": request.temperature,
        "top_p": request.top_p,
        "max_tokens": request.max_tokens,
        "stop_sequences": list(request.stop_sequences),
    }


def request_digest(request: GenerationRequest) -> str:
    """Stable sha256 over the canonical request payload."""
    canonical = json.dumps(request_payload(request), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _count_word_tokens(text: str) -> int:
    return len(re.findall(r"\w+|[^\w\s]", text))


def _count_byte_quads(text: str) -> int:
    return (len(text.encode("utf-8")) + 3) // 4


_TOKENIZERS: dict[str, Callable[[str], int]] = {
    # Approximations by construction: one token per word or punctuation mark,
    # or one token per four UTF-8 bytes. Exact model tokenizers are not bundled.
    "approx-words": _count_word_tokens,
    "approx-bytes4": _count_byte_quads,
}


def count_tokens(prompt: Prompt, tokenizer_id: str = "approx-words") -> int:
    """Token count of a prompt under a registered tokenizer."""
    try:
        tokenizer = _TOKENIZERS[tokenizer_id]
    except KeyError:
        raise UnknownTokenizer(tokenizer_id) from None
    return tokenizer(prompt_text(prompt))


def extract_question(prompt: Prompt) -> Optional[str]:
    """The question a prompt asks about, from its final TODO or fix-request line."""
    if isinstance(prompt, str):
        idx = prompt.rfind(TODO_PREFIX)
        if idx < 0:
            return None
        return prompt[idx + len(TODO_PREFIX) :].split("\n", 1)[0]
    for message in prompt:
        if message.role == "user" and message.content.startswith(ERRORFIX_REQUEST):
            return message.content[len(ERRORFIX_REQUEST) :].split("\n", 1)[0]
    return None


class HttpBackend:
    """OpenAI-compatible HTTP backend with retries and a simple rate limiter.

    String prompts go to ``{base_url}/completions``; role-message prompts go
    to ``{base_url}/chat/completions`` with assistant_prefill mapped to a
    trailing assistant message.  The API key is read from the environment.
    """

    RETRYABLE_STATUS = (429, 500, 502, 503, 504)

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "TABQA_API_KEY",
        timeout_s: float = 120.0,
        max_retries: int = 3,
        retry_base_delay_s: float = 1.0,
        context_window: Optional[int] = None,
        min_request_interval_s: float = 0.0,
        session=None,
    ) -> None:
        import requests

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.retry_base_delay_s = retry_base_delay_s
        self.context_window = context_window
        self.min_request_interval_s = min_request_interval_s
        self.backend_id = f"http:{model}"
        self._session = session if session is not None else requests.Session()
        self._lock = threading.Lock()
        self._last_request_at = 0.0

    def _throttle(self) -> None:
        if self.min_request_interval_s <= 0:
            return
        with self._lock:
            wait = self._last_request_at + self.min_request_interval_s - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request_at = time.monotonic()

    def _endpoint_and_body(self, request: GenerationRequest) -> tuple[str, dict]:
        common = {
            "model": self.model,
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        if request.stop_sequences:
            common["stop"] = list(request.stop_sequences)
        if isinstance(request.prompt, str):
            return f"{self.base_url}/completions", {**common, "prompt": request.prompt}
        role_map = {"system": "system", "user": "user", "assistant_prefill": "assistant"}
        messages = [
            {"role": role_map[m.role], "content": m.content} for m in request.prompt
        ]
        return f"{self.base_url}/chat/completions", {**common, "messages": messages}

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        import requests

        if self.context_window is not None:
            if count_tokens(request.prompt, "approx-bytes4") > self.context_window:
                raise ContextOverflow(
                    f"prompt exceeds the configured {self.context_window}-token window"
                )
        url, body = self._endpoint_and_body(request)
        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt > 0:
                time.sleep(self.retry_base_delay_s * 2 ** (attempt - 1))
            self._throttle()
            try:
                reply = self._session.post(
                    url, json=body, headers=self._headers(), timeout=self.timeout_s
                )
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if reply.status_code in self.RETRYABLE_STATUS:
                last_error = f"HTTP {reply.status_code}: {reply.text[:200]}"
                continue
            if reply.status_code != 200:
                detail = reply.text[:500]
                if reply.status_code == 400 and "context" in detail.lower():
                    raise ContextOverflow(detail)
                raise BackendUnavailable(f"HTTP {reply.status_code}: {detail}")
            return self._parse_reply(reply.json())
        raise BackendUnavailable(f"giving up after {self.max_retries} retries: {last_error}")

    def _parse_reply(self, data: dict) -> GenerationResponse:
        try:
            choice = data["choices"][0]
            text = choice["text"] if "text" in choice else choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed backend response: {exc}") from exc
        usage = data.get("usage") or {}
        return GenerationResponse(
            text=text,
            prompt_token_count=int(usage.get("prompt_tokens", 0)),
            completion_token_count=int(usage.get("completion_tokens", 0)),
            backend_id=self.backend_id,
        )


class ScriptedBackend:
    """Deterministic mock: responses dequeued per question in call order.

    ``script`` maps a question to the ordered responses its calls receive
    (step one, step two, then any fix attempts).  With ``by_digest`` the
    backend instead keys strictly on the request digest.
    """

    def __init__(
        self,
        script: Optional[dict[str, list[str]]] = None,
        by_digest: Optional[dict[str, list[str]]] = None,
    ) -> None:
        if (script is None) == (by_digest is None):
            raise ValueError("provide exactly one of script or by_digest")
        self.backend_id = "scripted"
        self._queues = {k: list(v) for k, v in (script or by_digest or {}).items()}
        self._strict = by_digest is not None
        self._lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        key = request_digest(request) if self._strict else extract_question(request.prompt)
        with self._lock:
            queue = self._queues.get(key)
            if not queue:
                raise ScriptExhausted(f"no scripted response left for {key!r}")
            text = queue.pop(0)
        return GenerationResponse(
            text=text,
            prompt_token_count=count_tokens(request.prompt),
            completion_token_count=count_tokens(text),
            backend_id=self.backend_id,
        )


def load_script(path) -> dict[str, list[str]]:
    """Question-to-responses script from a JSON file."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict) or not all(
        isinstance(v, list) and all(isinstance(s, str) for s in v) for v in data.values()
    ):
        raise ValueError(f"{path}: script must map questions to lists of responses")
    return {k: list(v) for k, v in data.items()}


class RecordingBackend:
    """Wraps a backend and appends every exchange to a JSONL cassette."""

    def __init__(self, inner: Backend, cassette_path) -> None:
        self.inner = inner
        self.backend_id = inner.backend_id
        self.cassette_path = Path(cassette_path)
        self._lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        response = self.inner.generate(request)
        entry = {
            "digest": request_digest(request),
            "request": request_payload(request),
            "response": {
                "text": response.text,
                "prompt_token_count": response.prompt_token_count,
                "completion_token_count": response.completion_token_count,
                "backend_id": response.backend_id,
            },
        }
        line = json.dumps(entry, ensure_ascii=False)
        with self._lock:
            with open(self.cassette_path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
        return response


class ReplayBackend:
    """Serves recorded responses by request digest, in recorded order."""

    def __init__(self, cassette_path) -> None:
        self.backend_id = "replay"
        self.cassette_path = Path(cassette_path)
        self._queues: dict[str, list[GenerationResponse]] = {}
        self._lock = threading.Lock()
        with open(self.cassette_path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                entry = json.loads(line)
                stored = entry["response"]
                self._queues.setdefault(entry["digest"], []).append(
                    GenerationResponse(
                        text=stored["text"],
                        prompt_token_count=stored.get("prompt_token_count", 0),
                        completion_token_count=stored.get("completion_token_count", 0),
                        backend_id=stored.get("backend_id", "replay"),
                    )
                )

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        digest = request_digest(request)
        with self._lock:
            queue = self._queues.get(digest)
            if not queue:
                raise ScriptExhausted(f"cassette has no response for digest {digest[:12]}...")
            return queue.pop(0)
