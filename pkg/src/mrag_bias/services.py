"""Wire protocol for the external retriever, reranker and generator services.

Every service speaks HTTP/1.1 with JSON bodies:

    POST /retrieve  {"query", "top_k"}                    -> {"chunk_ids", "scores"}
    POST /rerank    {"query", "documents", "chunk_ids"}   -> {"scores"}
    POST /generate  {"question", "context", "generator_id"[, "prompt"]} -> {"answer"}

An endpoint handle is anything with a ``name`` and a ``post(route, payload)``
method returning the decoded response body. :class:`HttpEndpoint` talks to a
real server; :class:`LocalEndpoint` dispatches to in-process mocks through
the same JSON encoding, so tests exercise identical request/response code.
"""

import hashlib
import json
import logging
import math
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass

from mrag_bias.corpus import render_chunk_text
from mrag_bias.exceptions import ProtocolError, ServiceError
from mrag_bias.io import dumps
from mrag_bias.records import RankedList

logger = logging.getLogger(__name__)

ROUTES = ("/retrieve", "/rerank", "/generate")


@dataclass
class RetrieveRequest:
    query: str
    top_k: int


@dataclass
class RetrieveResponse:
    chunk_ids: list
    scores: list


@dataclass
class RerankRequest:
    query: str
    documents: list
    chunk_ids: list


@dataclass
class RerankResponse:
    scores: list


@dataclass
class GenerateRequest:
    question: str
    context: str
    generator_id: str
    prompt: str = None

    def to_dict(self):
        d = asdict(self)
        if d["prompt"] is None:
            del d["prompt"]
        return d


def _require(payload, key, kind, endpoint):
    if not isinstance(payload, dict) or key not in payload:
        raise ProtocolError(endpoint, f"response is missing {key!r}")
    value = payload[key]
    if not isinstance(value, kind):
        raise ProtocolError(endpoint, f"{key!r} has type {type(value).__name__}")
    return value


def _numbers(values, key, endpoint):
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ProtocolError(endpoint, f"{key!r} contains a non-numeric or non-finite value {v!r}")
        out.append(float(v))
    return out


class HttpEndpoint:
    """JSON-over-HTTP service handle with retries and a bounded in-flight count.

    Safe to share between worker threads.
    """

    def __init__(self, name, url, auth=None, timeout=30.0, retries=3, max_in_flight=8, backoff=0.2):
        self.name = name
        self.url = url.rstrip("/")
        self.auth = auth
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def __repr__(self):
        return f"HttpEndpoint({self.name!r}, {self.url!r})"

    def _once(self, route, body):
        headers = {"Content-Type": "application/json; charset=utf-8"}
        if self.auth:
            headers["Authorization"] = f"Bearer {self.auth}"
        req = urllib.request.Request(self.url + route, data=body, headers=headers, method="POST")
        with self._slots, urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return resp.read()

    def post(self, route, payload):
        body = dumps(payload).encode("utf-8")
        last = None
        for attempt in range(self.retries):
            try:
                raw = self._once(route, body)
                break
            except urllib.error.HTTPError as exc:
                if exc.code < 500:
                    detail = exc.read().decode("utf-8", "replace")[:200]
                    raise ProtocolError(self.name, f"HTTP {exc.code} on {route}: {detail}") from None
                last = exc
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
                last = exc
            if attempt + 1 < self.retries:
                time.sleep(self.backoff * 2 ** attempt)
        else:
            raise ServiceError(f"{self.name}: {route} failed after {self.retries} attempts: {last}")
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(self.name, f"malformed JSON from {route}: {exc}") from None


class LocalEndpoint:
    """In-process handle; round-trips through the JSON encoding like the wire."""

    def __init__(self, name, services):
        self.name = name
        self.services = services

    def __repr__(self):
        return f"LocalEndpoint({self.name!r})"

    def post(self, route, payload):
        request = json.loads(dumps(payload))
        return json.loads(dumps(self.services.dispatch(route, request)))


# -- client operations -------------------------------------------------------

def retrieve(endpoint, query, top_k, query_id=""):
    """Fetch up to ``top_k`` chunk ids for ``query``, best first."""
    if int(top_k) < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    payload = endpoint.post("/retrieve", asdict(RetrieveRequest(query, int(top_k))))
    ids = _require(payload, "chunk_ids", list, endpoint.name)
    scores = _numbers(_require(payload, "scores", list, endpoint.name), "scores", endpoint.name)
    if len(ids) != len(scores):
        raise ProtocolError(endpoint.name, f"{len(ids)} chunk_ids but {len(scores)} scores")
    if len(ids) > top_k:
        raise ProtocolError(endpoint.name, f"returned {len(ids)} results for top_k={top_k}")
    if len(set(ids)) != len(ids) or not all(isinstance(c, str) for c in ids):
        raise ProtocolError(endpoint.name, "chunk_ids must be distinct strings")
    if any(b > a for a, b in zip(scores, scores[1:])):
        raise ProtocolError(endpoint.name, "retrieval scores are not non-increasing")
    return RankedList(query_id, list(zip(ids, scores)))


def rerank(endpoint, query, chunks, query_id=""):
    """Score every chunk in one request and return them best first (stable on ties)."""
    chunks = list(chunks)
    if not chunks:
        raise ValueError("rerank needs at least one chunk")
    ids = [c.chunk_id for c in chunks]
    req = RerankRequest(query, [render_chunk_text(c) for c in chunks], ids)
    payload = endpoint.post("/rerank", asdict(req))
    scores = _numbers(_require(payload, "scores", list, endpoint.name), "scores", endpoint.name)
    if len(scores) != len(ids):
        raise ProtocolError(endpoint.name, f"sent {len(ids)} documents, got {len(scores)} scores")
    return RankedList.from_scores(query_id, ids, scores)


def generate(endpoint, question, context, generator_id, prompt_template=None):
    if not question:
        raise ValueError("question must be non-empty")
    prompt = None
    if prompt_template:
        prompt = prompt_template.format(question=question, context=context)
    req = GenerateRequest(question, context, generator_id, prompt)
    payload = endpoint.post("/generate", req.to_dict())
    return _require(payload, "answer", str, endpoint.name)


# -- deterministic mocks -----------------------------------------------------

_TOKEN = re.compile(r"\w+")


def _tokens(text):
    return set(_TOKEN.findall(text.casefold()))


class MockRetriever:
    """Ranks the whole corpus by case-folded token overlap with the query.

    Ties keep corpus order, so the output is a pure function of the corpus
    and the request.
    """

    def __init__(self, chunks):
        self.chunks = list(chunks)
        self._tokens = [_tokens(render_chunk_text(c)) for c in self.chunks]

    def __call__(self, request):
        q = _tokens(request["query"])
        scores = [len(q & toks) for toks in self._tokens]
        order = sorted(range(len(scores)), key=lambda i: -scores[i])[: int(request["top_k"])]
        return {"chunk_ids": [self.chunks[i].chunk_id for i in order], "scores": [float(scores[i]) for i in order]}


class MockReranker:
    """Scores (query, chunk_id) pairs from a table or a seeded hash.

    ``scores`` may map chunk_id -> score, or query text -> {chunk_id: score};
    pairs missing from the table fall back to the hash. ``language_boost``
    adds a per-language offset (needs ``language_of``) to imitate a biased
    reranker.
    """

    def __init__(self, seed=0, scores=None, language_boost=None, language_of=None):
        self.seed = seed
        self.scores = scores or {}
        self.language_boost = language_boost or {}
        self.language_of = language_of or {}

    def _hash_score(self, query, chunk_id):
        digest = hashlib.blake2b(f"{self.seed}\x1f{query}\x1f{chunk_id}".encode(), digest_size=8).digest()
        return int.from_bytes(digest, "big") / 2.0 ** 64

    def score(self, query, chunk_id):
        table = self.scores.get(query, self.scores)
        value = table.get(chunk_id) if isinstance(table, dict) else None
        if not isinstance(value, (int, float)):
            value = self._hash_score(query, chunk_id)
        return float(value) + self.language_boost.get(self.language_of.get(chunk_id), 0.0)

    def __call__(self, request):
        return {"scores": [self.score(request["query"], cid) for cid in request["chunk_ids"]]}


class MockGenerator:
    """Answer generator with three modes.

    ``table``: look the question up in ``answers``.
    ``echo``: return the first ``echo_chars`` characters of the context.
    ``grounded``: return the tabled answer only if it occurs (case-folded)
    in the first ``window`` characters of the context, else echo.
    Unknown questions yield ``""`` and a recorded warning.
    """

    MODES = ("table", "echo", "grounded")

    def __init__(self, mode="table", answers=None, echo_chars=20, window=None):
        if mode not in self.MODES:
            raise ValueError(f"unknown mock generator mode {mode!r}")
        self.mode = mode
        self.answers = answers or {}
        self.echo_chars = echo_chars
        self.window = window
        self.warnings = []
        self._lock = threading.Lock()

    def _warn(self, message):
        logger.warning(message)
        with self._lock:
            self.warnings.append(message)

    def answer(self, question, context):
        if self.mode == "echo":
            return context[: self.echo_chars]
        if question not in self.answers:
            self._warn(f"mock generator has no answer for question {question!r}")
            return ""
        gold = self.answers[question]
        if self.mode == "table":
            return gold
        visible = context if self.window is None else context[: self.window]
        if gold.casefold() in visible.casefold():
            return gold
        return context[: self.echo_chars]

    def __call__(self, request):
        return {"answer": self.answer(request["question"], request["context"])}


class MockServices:
    """Bundle of mocks answering the three protocol routes."""

    def __init__(self, retriever=None, reranker=None, generators=None):
        self.retriever = retriever
        self.reranker = reranker
        self.generators = generators or {}

    @classmethod
    def from_fixtures(cls, fixtures, chunks):
        """Build from a fixtures mapping (see ``mock-serve --fixtures``)."""
        chunks = list(chunks)
        rr = fixtures.get("reranker", {})
        reranker = MockReranker(
            seed=rr.get("seed", 0),
            scores=rr.get("scores"),
            language_boost=rr.get("language_boost"),
            language_of={c.chunk_id: c.language for c in chunks},
        )
        generators = {
            gid: MockGenerator(
                mode=g.get("mode", "table"),
                answers=g.get("answers"),
                echo_chars=g.get("echo_chars", 20),
                window=g.get("window"),
            )
            for gid, g in fixtures.get("generators", {}).items()
        }
        return cls(MockRetriever(chunks), reranker, generators)

    def dispatch(self, route, request):
        if route == "/retrieve" and self.retriever is not None:
            return self.retriever(request)
        if route == "/rerank" and self.reranker is not None:
            return self.reranker(request)
        if route == "/generate":
            gen = self.generators.get(request.get("generator_id")) or self.generators.get("default")
            if gen is None:
                raise ProtocolError("mock", f"unknown generator_id {request.get('generator_id')!r}")
            return gen(request)
        raise ProtocolError("mock", f"no handler for {route}")
