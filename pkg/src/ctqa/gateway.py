"""Completion gateway with live, scripted-mock and record/replay backends.

Every backend implements ``complete(request) -> CompletionResult``. The
``Gateway`` in front of them adds a concurrency cap, an optional token-rate
limiter and transcript recording. Transcripts are JSON-lines files, one per
QA pair, each line keyed by the request digest.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .errors import (ContextLengthExceeded, GatewayError, NetworkError, RateLimited,
                     ReplayMiss, StorageError)

log = logging.getLogger(__name__)

ENDPOINT_ENV = "CTQA_ENDPOINT_URL"
API_KEY_ENV = "CTQA_API_KEY"
DEFAULT_MODEL = "text-davinci-003"


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    model_name: str = DEFAULT_MODEL
    max_generated_tokens: int = 512
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        if self.max_generated_tokens < 1:
            raise ValueError("max_generated_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))

    @property
    def digest(self) -> str:
        return request_digest(self.model_name, self.temperature, self.prompt)


def request_digest(model_name: str, temperature: float, prompt: str) -> str:
    # max tokens and stop sequences are deliberately not part of the key
    payload = json.dumps([model_name, float(temperature), prompt], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int = 0
    generated_tokens: int = 0
    backend_id: str = ""
    latency_ms: int = 0


# --------------------------------------------------------------------------
# transcripts


@dataclass
class TranscriptEntry:
    digest: str
    request: CompletionRequest
    result: CompletionResult | None = None
    error: str | None = None  # error tag for recorded deterministic failures
    error_message: str = ""

    def to_json(self) -> str:
        record = {
            "digest": self.digest,
            "request": {**asdict(self.request), "stop_sequences": list(self.request.stop_sequences)},
            "result": asdict(self.result) if self.result else None,
            "error": self.error,
            "error_message": self.error_message,
        }
        return json.dumps(record, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "TranscriptEntry":
        rec = json.loads(line)
        req = rec["request"]
        request = CompletionRequest(
            prompt=req["prompt"], model_name=req["model_name"],
            max_generated_tokens=req["max_generated_tokens"], temperature=req["temperature"],
            stop_sequences=tuple(req.get("stop_sequences") or ()))
        result = CompletionResult(**rec["result"]) if rec.get("result") else None
        return cls(rec["digest"], request, result, rec.get("error"), rec.get("error_message", ""))


@dataclass
class Transcript:
    qa_id: str
    entries: list[TranscriptEntry] = field(default_factory=list)

    def add(self, entry: TranscriptEntry) -> None:
        if any(e.digest == entry.digest for e in self.entries):
            return
        self.entries.append(entry)


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


def transcript_filename(qa_id: str) -> str:
    safe = _UNSAFE.sub("_", qa_id)
    if safe != qa_id:
        safe += "-" + hashlib.sha1(qa_id.encode("utf-8")).hexdigest()[:8]
    return f"{safe}.jsonl"


def write_transcript(directory: str | os.PathLike, transcript: Transcript) -> Path:
    path = Path(directory) / transcript_filename(transcript.qa_id)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".jsonl.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for entry in transcript.entries:
                fh.write(entry.to_json() + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write transcript {path}: {exc}") from exc
    return path


def read_transcript(path: str | os.PathLike) -> list[TranscriptEntry]:
    with open(path, encoding="utf-8") as fh:
        return [TranscriptEntry.from_json(line) for line in fh if line.strip()]


_ERRORS_BY_TAG = {cls.tag: cls for cls in (ContextLengthExceeded, RateLimited, NetworkError)}


# --------------------------------------------------------------------------
# backends


class MockBackend:
    """Returns scripted responses in order, or delegates to a responder callable.

    Script items may be strings or exception instances (raised when reached).
    """

    backend_id = "mock"

    def __init__(self, script: Sequence[str | Exception] | Callable[[CompletionRequest], str] = ()):
        self._lock = threading.Lock()
        self._responder = script if callable(script) else None
        self._script = deque([] if callable(script) else script)
        self.requests: list[CompletionRequest] = []

    def complete(self, request: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.requests.append(request)
            if self._responder is not None:
                item = self._responder(request)
            elif self._script:
                item = self._script.popleft()
            else:
                raise GatewayError("mock script exhausted")
        if isinstance(item, Exception):
            raise item
        return CompletionResult(text=item, backend_id=self.backend_id)

    @property
    def remaining(self) -> int:
        return len(self._script)


class ReplayBackend:
    """Answers from recorded transcripts; an unknown digest is a ``ReplayMiss``."""

    backend_id = "replay"

    def __init__(self, transcript_dir: str | os.PathLike):
        self.transcript_dir = Path(transcript_dir)
        self._lock = threading.Lock()
        self._cache: dict[str, TranscriptEntry] = {}
        if not self.transcript_dir.is_dir():
            raise StorageError(f"transcript directory {self.transcript_dir} does not exist")
        for path in sorted(self.transcript_dir.glob("*.jsonl")):
            for entry in read_transcript(path):
                self._cache.setdefault(entry.digest, entry)

    def __len__(self):
        return len(self._cache)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        digest = request.digest
        with self._lock:
            entry = self._cache.get(digest)
        if entry is None:
            raise ReplayMiss(digest)
        if entry.error:
            raise _ERRORS_BY_TAG.get(entry.error, GatewayError)(entry.error_message or entry.error)
        return entry.result


_CONTEXT_PATTERNS = ("maximum context length", "context_length_exceeded", "too many tokens",
                     "context length")


class LiveBackend:
    """Completions-style HTTP endpoint ({model, prompt, max_tokens, temperature, stop}).

    Rate-limit responses are retried with jittered exponential backoff (initial
    delay, doubling, capped attempt count) before ``RateLimited`` is surfaced.
    """

    backend_id = "live"

    def __init__(self, base_url: str | None = None, api_key: str | None = None, *,
                 timeout: float = 120.0, max_attempts: int = 5, initial_backoff: float = 1.0,
                 backoff_factor: float = 2.0, context_limit: int | None = None,
                 counter=None, transport=None, sleep: Callable[[float], None] = time.sleep,
                 rng: random.Random | None = None):
        import httpx

        base_url = base_url or os.environ.get(ENDPOINT_ENV)
        if not base_url:
            raise ValueError(f"live backend needs an endpoint URL ({ENDPOINT_ENV})")
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.url = base_url.rstrip("/") + ("" if base_url.rstrip("/").endswith("/completions") else "/completions")
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self._httpx = httpx
        self.max_attempts = max_attempts
        self.initial_backoff = initial_backoff
        self.backoff_factor = backoff_factor
        self.context_limit = context_limit
        self.counter = counter
        self._sleep = sleep
        self._rng = rng or random.Random()

    def _check_length(self, request: CompletionRequest) -> None:
        if self.context_limit is None or self.counter is None:
            return
        n = self.counter.count(request.prompt)
        if n + request.max_generated_tokens > self.context_limit:
            raise ContextLengthExceeded(
                f"prompt of {n} tokens plus {request.max_generated_tokens} generated tokens "
                f"exceeds the {self.context_limit}-token context")

    def _post(self, request: CompletionRequest):
        payload = {
            "model": request.model_name,
            "prompt": request.prompt,
            "max_tokens": request.max_generated_tokens,
            "temperature": request.temperature,
        }
        if request.stop_sequences:
            payload["stop"] = list(request.stop_sequences)
        try:
            return self._client.post(self.url, json=payload)
        except self._httpx.TransportError as exc:
            raise NetworkError(f"{type(exc).__name__}: {exc}") from exc

    def complete(self, request: CompletionRequest) -> CompletionResult:
        self._check_length(request)
        delay = self.initial_backoff
        for attempt in range(1, self.max_attempts + 1):
            started = time.monotonic()
            try:
                resp = self._post(request)
            except NetworkError as exc:
                failure: GatewayError = exc
            else:
                elapsed = int((time.monotonic() - started) * 1000)
                if resp.status_code == 200:
                    return self._parse(resp, elapsed)
                message = _error_message(resp)
                if resp.status_code == 429:
                    failure = RateLimited(f"rate limited after {attempt} attempt(s): {message}")
                elif resp.status_code == 400 and any(p in message.lower() for p in _CONTEXT_PATTERNS):
                    raise ContextLengthExceeded(message)
                elif resp.status_code >= 500:
                    failure = NetworkError(f"server error {resp.status_code}: {message}")
                else:
                    raise GatewayError(f"endpoint returned {resp.status_code}: {message}")
            if attempt == self.max_attempts:
                raise failure
            wait = delay * (0.5 + self._rng.random())
            log.info("%s (attempt %d), retrying in %.2fs", failure.tag, attempt, wait)
            self._sleep(wait)
            delay *= self.backoff_factor
        raise AssertionError("unreachable")  # pragma: no cover

    def _parse(self, resp, elapsed_ms: int) -> CompletionResult:
        try:
            body = resp.json()
            text = body["choices"][0]["text"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed completion response: {exc}") from exc
        usage = body.get("usage") or {}
        return CompletionResult(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            generated_tokens=int(usage.get("completion_tokens", 0)),
            backend_id=self.backend_id,
            latency_ms=elapsed_ms,
        )


def _error_message(resp) -> str:
    try:
        body = resp.json()
    except ValueError:
        return resp.text[:500]
    err = body.get("error") if isinstance(body, dict) else None
    if isinstance(err, dict):
        return " ".join(str(err.get(k, "")) for k in ("message", "code") if err.get(k))
    return str(body)[:500]


# --------------------------------------------------------------------------
# gateway


class TokenRateLimiter:
    """Sliding one-minute window over prompt+generation token estimates."""

    def __init__(self, tokens_per_minute: int, clock=time.monotonic, sleep=time.sleep):
        self.tokens_per_minute = tokens_per_minute
        self._events: deque[tuple[float, int]] = deque()
        self._lock = threading.Lock()
        self._clock = clock
        self._sleep = sleep

    def acquire(self, tokens: int) -> None:
        tokens = min(tokens, self.tokens_per_minute)
        while True:
            with self._lock:
                now = self._clock()
                while self._events and now - self._events[0][0] >= 60.0:
                    self._events.popleft()
                used = sum(n for _, n in self._events)
                if used + tokens <= self.tokens_per_minute:
                    self._events.append((now, tokens))
                    return
                wait = 60.0 - (now - self._events[0][0])
            self._sleep(max(wait, 0.01))


class Session:
    """Per-QA-pair handle: forwards calls to the gateway and collects the transcript."""

    def __init__(self, gateway: "Gateway", qa_id: str):
        self.gateway = gateway
        self.transcript = Transcript(qa_id)
        self.calls = 0

    def complete(self, request: CompletionRequest) -> CompletionResult:
        self.calls += 1
        digest = request.digest
        try:
            result = self.gateway.complete(request)
        except ContextLengthExceeded as exc:
            # recorded so a replay reproduces the same fallback path
            self.transcript.add(TranscriptEntry(digest, request, None, exc.tag, str(exc)))
            raise
        self.transcript.add(TranscriptEntry(digest, request, result))
        return result


class Gateway:
    def __init__(self, backend, *, concurrency_cap: int = 4, transcript_dir: str | os.PathLike | None = None,
                 rate_limiter: TokenRateLimiter | None = None, counter=None):
        self.backend = backend
        self.transcript_dir = Path(transcript_dir) if transcript_dir else None
        self._slots = threading.BoundedSemaphore(max(1, concurrency_cap))
        self.rate_limiter = rate_limiter
        self.counter = counter

    @property
    def backend_id(self) -> str:
        return getattr(self.backend, "backend_id", type(self.backend).__name__)

    @property
    def recording(self) -> bool:
        return self.transcript_dir is not None and self.backend_id != "replay"

    def complete(self, request: CompletionRequest) -> CompletionResult:
        if self.rate_limiter is not None:
            estimate = (self.counter.count(request.prompt) if self.counter else len(request.prompt) // 3)
            self.rate_limiter.acquire(estimate + request.max_generated_tokens)
        with self._slots:
            return self.backend.complete(request)

    @contextmanager
    def session(self, qa_id: str):
        session = Session(self, qa_id)
        try:
            yield session
        finally:
            if self.recording and session.transcript.entries:
                write_transcript(self.transcript_dir, session.transcript)

    def transcript_ref(self, qa_id: str) -> str:
        return transcript_filename(qa_id)


def load_transcripts(directory: str | os.PathLike) -> dict[str, list[TranscriptEntry]]:
    return {p.name: read_transcript(p) for p in sorted(Path(directory).glob("*.jsonl"))}
