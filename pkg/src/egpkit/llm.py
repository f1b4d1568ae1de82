"""Presence-probability classification through a completions endpoint.

For each (statement, sentence) pair the client renders a fixed prompt,
requests a single output token with its top alternatives, and converts
the Yes/No log probabilities into a presence probability via a softmax
over the two values. Results are cached by (model, prompt) digest so
reruns cost no network calls.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .corpus import CanDoStatement, Sentence
from .errors import ClassificationError, TransportError

API_KEY_ENV_VAR = "EGP_LLM_API_KEY"

_PROMPT_HEADER = (
    "Read this sentence written by an L2 learner of English and its respective "
    "PoS, grammatical, and universal dependency tags associated to each token:"
)
_PROMPT_QUESTION = (
    "Does the following can-do statement apply to this sentence? Just answer Yes "
    "or No without adding any comments, notes, or explanations. The SuperCategory, "
    "SuperCategory, and Guideword entries will help you contextualise the can-do "
    "statement better. Furthermore, you will see one or more examples written by "
    "other L2 learners for which the can-do statement applies."
)


@dataclass(frozen=True)
class PromptContext:
    statement: CanDoStatement
    sentence: Sentence


@dataclass(frozen=True)
class PresenceProbability:
    """Probability that the construct is present in the queried sentence."""

    p: float


@dataclass
class LlmConfig:
    base_url: str
    model: str
    max_in_flight: int = 4
    timeout: float = 60.0
    cache_dir: str | Path | None = None
    top_logprobs: int = 20
    max_retries: int = 3
    retry_base_delay: float = 0.5

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


@dataclass
class BatchResult:
    """Order-preserving batch output; failed items are None with an error entry."""

    probabilities: list[PresenceProbability | None]
    errors: list[tuple[int, str]] = field(default_factory=list)


def build_prompt(ctx: PromptContext) -> str:
    """Render the classification prompt for one statement/sentence pair.

    The rendering is fixed so that identical inputs always produce the
    identical prompt string (and therefore the same cache key).
    """
    if not ctx.statement.examples:
        raise ValueError(
            f"statement {ctx.statement.egp_id} has no examples; cannot build a prompt"
        )
    tuples = [(t.form, t.upos, t.xpos, t.dep) for t in ctx.sentence.tokens]
    lines = [
        _PROMPT_HEADER,
        f"'{ctx.sentence.text}'",
        str(tuples),
        _PROMPT_QUESTION,
        f"Can-do statement: {ctx.statement.statement}",
        f"SuperCategory: {ctx.statement.supercategory}",
        f"SubCategory: {ctx.statement.subcategory}",
        f"Guideword: {ctx.statement.guideword}",
        "Example(s):",
        *ctx.statement.examples,
        "Your answer:",
    ]
    return "\n".join(lines)


def softmax_confidence(logp_yes: float, logp_no: float) -> PresenceProbability:
    """Two-way softmax over first-token log probabilities, shift-safe."""
    if not (math.isfinite(logp_yes) and math.isfinite(logp_no)):
        raise ValueError(f"log probabilities must be finite, got ({logp_yes}, {logp_no})")
    m = max(logp_yes, logp_no)
    ey = math.exp(logp_yes - m)
    en = math.exp(logp_no - m)
    return PresenceProbability(ey / (ey + en))


def prompt_digest(model: str, prompt: str) -> str:
    return hashlib.sha256(f"{model}\n{prompt}".encode("utf-8")).hexdigest()


class _Cache:
    """One JSON record per (model, prompt) digest; in-memory when no dir is set.

    Writes are atomic (tmp file + rename) and write-once, so a digest can
    never end up with two different stored probabilities.
    """

    def __init__(self, cache_dir: str | Path | None):
        self.dir = Path(cache_dir) if cache_dir is not None else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, dict] = {}
        self._lock = threading.Lock()

    def get(self, digest: str) -> dict | None:
        with self._lock:
            if digest in self._memory:
                return self._memory[digest]
        if self.dir is None:
            return None
        path = self.dir / f"{digest}.json"
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None
        with self._lock:
            self._memory[digest] = record
        return record

    def put(self, digest: str, record: dict) -> None:
        with self._lock:
            if digest in self._memory:
                return
            self._memory[digest] = record
        if self.dir is None:
            return
        path = self.dir / f"{digest}.json"
        if path.exists():
            return
        fd, tmp = tempfile.mkstemp(dir=self.dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh)
            os.replace(tmp, path)
        except OSError:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise


class LlmClient:
    """Thread-safe client with bounded concurrency and per-key request locks."""

    def __init__(self, config: LlmConfig, session: requests.Session | None = None):
        self.config = config
        self._cache = _Cache(config.cache_dir)
        self._key_locks: dict[str, threading.Lock] = {}
        self._key_locks_guard = threading.Lock()
        self._local = threading.local()
        self._shared_session = session

    def _session(self) -> requests.Session:
        if self._shared_session is not None:
            return self._shared_session
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def _lock_for(self, digest: str) -> threading.Lock:
        with self._key_locks_guard:
            if digest not in self._key_locks:
                self._key_locks[digest] = threading.Lock()
            return self._key_locks[digest]

    def classify(self, ctx: PromptContext) -> PresenceProbability:
        """Return the presence probability for one context, using the cache."""
        prompt = build_prompt(ctx)
        digest = prompt_digest(self.config.model, prompt)
        with self._lock_for(digest):
            record = self._cache.get(digest)
            if record is not None:
                return PresenceProbability(float(record["p"]))
            logp_yes, logp_no = self._request_logprobs(prompt)
            prob = softmax_confidence(logp_yes, logp_no)
            self._cache.put(
                digest,
                {
                    "model": self.config.model,
                    "p": prob.p,
                    "logp_yes": logp_yes,
                    "logp_no": logp_no,
                },
            )
            return prob

    def classify_batch(self, ctxs: list[PromptContext]) -> BatchResult:
        """Classify many contexts with at most max_in_flight concurrent requests."""
        if not ctxs:
            return BatchResult([])
        results: list[PresenceProbability | None] = [None] * len(ctxs)
        errors: list[tuple[int, str]] = []
        errors_lock = threading.Lock()

        def work(i: int) -> None:
            try:
                results[i] = self.classify(ctxs[i])
            except Exception as exc:
                with errors_lock:
                    errors.append((i, f"{type(exc).__name__}: {exc}"))

        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            list(pool.map(work, range(len(ctxs))))
        errors.sort()
        return BatchResult(results, errors)

    def _request_logprobs(self, prompt: str) -> tuple[float, float]:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": 1,
            "temperature": 0,
            "logprobs": True,
            "top_logprobs": self.config.top_logprobs,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV_VAR)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        last_error = None
        for attempt in range(self.config.max_retries):
            if attempt:
                time.sleep(self.config.retry_base_delay * (2 ** (attempt - 1)))
            try:
                response = self._session().post(
                    url, json=payload, headers=headers, timeout=self.config.timeout
                )
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                continue
            if response.status_code != 200:
                raise TransportError(f"endpoint returned HTTP {response.status_code}")
            return _extract_yes_no(response.json())
        raise TransportError(
            f"request failed after {self.config.max_retries} attempts: {last_error}"
        )


def _extract_yes_no(body: dict) -> tuple[float, float]:
    """Pull the Yes/No log probabilities out of a chat completion response."""
    try:
        alternatives = body["choices"][0]["logprobs"]["content"][0]["top_logprobs"]
    except (KeyError, IndexError, TypeError):
        raise ClassificationError("response carries no first-token top_logprobs")
    logp_yes: float | None = None
    logp_no: float | None = None
    for alt in alternatives:
        token = str(alt.get("token", "")).strip().casefold()
        logprob = alt.get("logprob")
        if logprob is None:
            continue
        if token == "yes":
            logp_yes = max(logp_yes, float(logprob)) if logp_yes is not None else float(logprob)
        elif token == "no":
            logp_no = max(logp_no, float(logprob)) if logp_no is not None else float(logprob)
    if logp_yes is None or logp_no is None:
        missing = [name for name, v in (("Yes", logp_yes), ("No", logp_no)) if v is None]
        raise ClassificationError(
            f"first-token alternatives contain no {' or '.join(missing)} variant"
        )
    return logp_yes, logp_no


def classify(ctx: PromptContext, config: LlmConfig) -> PresenceProbability:
    return LlmClient(config).classify(ctx)


def classify_batch(ctxs: list[PromptContext], config: LlmConfig) -> BatchResult:
    return LlmClient(config).classify_batch(ctxs)
