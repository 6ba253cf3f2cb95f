"""Client for a text-completion endpoint, plus a deterministic mock.

The wire protocol is one JSON POST per completion: the request carries
{"prompt", "max_new_tokens", "logprobs"} and the response {"text",
"model_id", "tokens"} where tokens are text pieces whose plain
concatenation reproduces the completion. The request deliberately has
no sampling fields; decoding is whatever deterministic mode the
endpoint defaults to.
"""

from __future__ import annotations

import math
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import requests

from .analysis import TokenLogProb
from .errors import EndpointError
from .metrics import normalize
from .serialize import parse_prompt

MOCK_RULES = ("echo_last_word", "answer_key")

# Every mock token gets probability one half, so answer perplexity has
# the closed form 2.0 regardless of answer length.
MOCK_TOKEN_LOGPROB = -math.log(2)


@dataclass(frozen=True)
class InferenceRequest:
    prompt: str
    max_new_tokens: int
    want_logprobs: bool = True

    def __post_init__(self) -> None:
        if not isinstance(self.prompt, str) or not self.prompt:
            raise ValueError("prompt must be a non-empty string")
        n = self.max_new_tokens
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ValueError(f"max_new_tokens must be a positive integer, got {n!r}")
        if not isinstance(self.want_logprobs, bool):
            raise ValueError("want_logprobs must be a boolean")


@dataclass(frozen=True)
class InferenceResponse:
    text: str
    model_id: str
    tokens: tuple[TokenLogProb, ...] | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.text, str):
            raise ValueError("text must be a string")
        if not isinstance(self.model_id, str) or not self.model_id:
            raise ValueError("model_id must be a non-empty string")
        if self.tokens is not None:
            object.__setattr__(self, "tokens", tuple(self.tokens))
            joined = "".join(t.token_text for t in self.tokens)
            if joined != self.text:
                raise ValueError(
                    f"token pieces {joined!r} do not concatenate to text {self.text!r}"
                )


def _pieces(answer: str) -> list[str]:
    words = answer.split()
    if not words:
        return []
    return [words[0]] + [" " + w for w in words[1:]]


def _contains_phrase(context_words: list[str], phrase_words: list[str]) -> bool:
    if not phrase_words:
        return False
    span = len(phrase_words)
    for start in range(len(context_words) - span + 1):
        if context_words[start : start + span] == phrase_words:
            return True
    return False


class MockBackend:
    """Deterministic stand-in backend, a pure function of the prompt.

    Rules: "echo_last_word" answers with the final context word, which
    makes serialization order visible in the output; "answer_key"
    answers a question with its gold answer when that answer appears
    contiguously in the context and "unknown" otherwise, imitating a
    reader that can only copy evidence it was actually given.
    """

    def __init__(
        self,
        rule: str,
        answer_key: Mapping[str, Sequence[str]] | None = None,
        token_logprob: float = MOCK_TOKEN_LOGPROB,
        model_id: str = "mock",
    ) -> None:
        if rule not in MOCK_RULES:
            raise ValueError(f"unknown mock rule {rule!r}, expected one of {MOCK_RULES}")
        if rule == "answer_key" and answer_key is None:
            raise ValueError("answer_key rule needs an answer key")
        self.rule = rule
        self.answer_key = dict(answer_key) if answer_key is not None else {}
        self.token_logprob = float(token_logprob)
        self.model_id = model_id

    def _answer(self, context_text: str, question: str) -> str:
        if self.rule == "echo_last_word":
            words = context_text.split()
            return words[-1] if words else ""
        context_words = normalize(context_text).split()
        for gold in self.answer_key.get(question, ()):
            if _contains_phrase(context_words, normalize(gold).split()):
                return gold
        return "unknown"

    def complete(self, request: InferenceRequest) -> InferenceResponse:
        context_text, question = parse_prompt(request.prompt)
        pieces = _pieces(self._answer(context_text, question))
        pieces = pieces[: request.max_new_tokens]
        text = "".join(pieces)
        tokens = None
        if request.want_logprobs:
            tokens = tuple(TokenLogProb(token_text=p, logprob=self.token_logprob) for p in pieces)
        return InferenceResponse(text=text, model_id=self.model_id, tokens=tokens)


class HTTPBackend:
    """Talks to a live endpoint; retries only transport failures.

    Timeouts and connection errors back off exponentially with jitter
    drawn from an injectable RNG so retry behavior is testable. HTTP
    and payload errors never retry: the endpoint answered, it just
    answered badly.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        session: requests.Session | None = None,
        jitter_rng: random.Random | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        if not endpoint:
            raise ValueError("endpoint must be non-empty")
        if max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        self.endpoint = endpoint
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.session = session if session is not None else requests.Session()
        self.jitter_rng = jitter_rng if jitter_rng is not None else random.Random()
        self.sleeper = sleeper

    def _post(self, payload: dict):
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                return self.session.post(self.endpoint, json=payload, timeout=self.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = exc
                if attempt < self.max_attempts:
                    jitter = 0.5 + 0.5 * self.jitter_rng.random()
                    self.sleeper(self.backoff_base * 2 ** (attempt - 1) * jitter)
        raise EndpointError(
            f"endpoint {self.endpoint} unreachable after {self.max_attempts} attempts: "
            f"{last_error}"
        )

    def complete(self, request: InferenceRequest) -> InferenceResponse:
        payload = {
            "prompt": request.prompt,
            "max_new_tokens": request.max_new_tokens,
            "logprobs": request.want_logprobs,
        }
        response = self._post(payload)
        if not 200 <= response.status_code < 300:
            raise EndpointError(
                f"endpoint returned {response.status_code}: {response.text[:200]}"
            )
        try:
            body = response.json()
        except ValueError as exc:
            raise EndpointError(f"endpoint returned invalid JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise EndpointError(f"endpoint returned {type(body).__name__}, expected object")
        try:
            tokens = None
            if request.want_logprobs and body.get("tokens") is not None:
                tokens = tuple(
                    TokenLogProb(token_text=t["text"], logprob=t["logprob"])
                    for t in body["tokens"]
                )
            return InferenceResponse(
                text=body["text"], model_id=body["model_id"], tokens=tokens
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EndpointError(f"malformed endpoint response: {exc}") from exc


class LLMClient:
    """Fans requests out to a backend with bounded concurrency."""

    def __init__(self, backend) -> None:
        self.backend = backend

    def predict(self, request: InferenceRequest) -> InferenceResponse:
        return self.backend.complete(request)

    def predict_batch(
        self,
        requests_batch: Sequence[InferenceRequest],
        max_in_flight: int = 1,
    ) -> list[InferenceResponse | EndpointError]:
        """Complete a batch, responses aligned with requests.

        An endpoint failure occupies its slot in the result list so one
        bad example cannot sink the rest of the batch.
        """
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        if not requests_batch:
            return []

        def run(request: InferenceRequest) -> InferenceResponse | EndpointError:
            try:
                return self.backend.complete(request)
            except EndpointError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(run, requests_batch))
