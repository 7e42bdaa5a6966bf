"""Language-model adapters: top-k next-token probability sources.

The search engine only ever sees ``TokenCandidate`` lists, so anything
that can produce them can drive generation.  Two adapters live here: a
deterministic scripted model used by tests and demos, and an HTTP client
for completion servers.  Tokenization is adapter-owned; the scripted
model tokenizes at lexeme granularity, which exercises exactly the same
control flow as sub-word tokens.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import requests

EOS_TOKEN_ID = "<eos>"

_PROB_SUM_SLACK = 1e-9


class AdapterError(Exception):
    """Base class for model-adapter failures."""


class AdapterUnavailable(AdapterError):
    """The model backend cannot be reached."""


class ProtocolError(AdapterError):
    """The model backend replied with something unusable."""


class UnknownToken(AdapterError):
    """A token sequence contains a token this adapter never produced."""


@dataclass(frozen=True)
class TokenCandidate:
    token_id: str
    surface: str
    prob: float

    @property
    def is_eos(self) -> bool:
        return self.token_id == EOS_TOKEN_ID


@dataclass(frozen=True)
class GenerationSession:
    """Immutable (task text, prefix) pair; nodes reconstruct these."""

    task_text: str
    prefix: tuple[str, ...] = ()


def lexeme_tokens(text: str) -> tuple[str, ...]:
    """Split canonical query text into lexeme tokens.

    Each token carries its trailing separator (space or newline), so the
    concatenation of tokens reproduces the text exactly.  String
    constants stay single tokens even when they contain spaces.
    """
    tokens: list[str] = []
    buf: list[str] = []
    in_string = False
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if in_string:
            buf.append(ch)
            if ch == "'":
                if i + 1 < n and text[i + 1] == "'":
                    buf.append("'")
                    i += 1
                else:
                    in_string = False
        elif ch in " \n":
            buf.append(ch)
            tokens.append("".join(buf))
            buf = []
        else:
            if ch == "'" and not buf:
                in_string = True
            buf.append(ch)
        i += 1
    if buf:
        tokens.append("".join(buf))
    return tuple(tokens)


# -- Scripted model ---------------------------------------------------------


@dataclass(frozen=True)
class DistractorSpec:
    """Per-step noise: one extra candidate with fixed probability mass.

    ``steps`` limits noise to those depths; None means every step.  A
    distractor token is always a dead end: a prefix ending in it gets no
    further candidates.
    """

    surface: str
    mass: float
    steps: frozenset[int] | None = None

    def applies_at(self, step: int) -> bool:
        return self.steps is None or step in self.steps


class _TrieNode:
    __slots__ = ("children", "end_weight", "weight")

    def __init__(self) -> None:
        self.children: dict[str, _TrieNode] = {}
        self.end_weight = 0.0
        self.weight = 0.0


class ScriptedModel:
    """Deterministic model over a weighted set of token paths.

    At each step the candidates are the trie children of the current
    prefix, with probability proportional to the weight of the paths
    below each child; a path ending at the current node contributes an
    EOS candidate.  Optional distractor noise reserves a fixed mass for
    one off-path token per step.
    """

    def __init__(
        self,
        paths: Sequence[tuple[Sequence[str], float]],
        distractor: DistractorSpec | None = None,
    ) -> None:
        if not paths:
            raise ValueError("a scripted model needs at least one path")
        self._root = _TrieNode()
        self._vocabulary: set[str] = {EOS_TOKEN_ID}
        for tokens, weight in paths:
            if weight <= 0:
                raise ValueError("path weights must be positive")
            self._insert(tuple(tokens), weight)
        self._accumulate(self._root)
        if self._root.weight > 1 + _PROB_SUM_SLACK:
            raise ValueError("path weights must sum to at most 1")
        self._distractor = distractor
        if distractor is not None:
            if not 0 < distractor.mass < 1:
                raise ValueError("distractor mass must be in (0, 1)")
            if distractor.surface in self._vocabulary:
                raise ValueError("distractor surface collides with a path token")
            self._vocabulary.add(distractor.surface)

    @classmethod
    def from_queries(
        cls,
        queries: Sequence[tuple[str, float]],
        distractor: DistractorSpec | None = None,
    ) -> "ScriptedModel":
        return cls(
            [(lexeme_tokens(text), weight) for text, weight in queries], distractor
        )

    def _insert(self, tokens: tuple[str, ...], weight: float) -> None:
        node = self._root
        for token in tokens:
            self._vocabulary.add(token)
            node = node.children.setdefault(token, _TrieNode())
        node.end_weight += weight

    def _accumulate(self, node: _TrieNode) -> float:
        node.weight = node.end_weight + sum(
            self._accumulate(child) for child in node.children.values()
        )
        return node.weight

    # -- adapter protocol ---------------------------------------------------

    def start_session(self, task_text: str) -> GenerationSession:
        return GenerationSession(task_text)

    def top_candidates(
        self, session: GenerationSession, k: int
    ) -> list[TokenCandidate]:
        if EOS_TOKEN_ID in session.prefix:
            raise ProtocolError("session already ended with EOS")
        node: _TrieNode | None = self._root
        for token in session.prefix:
            node = node.children.get(token) if node is not None else None
        if node is None:
            return []  # off the scripted paths: dead end
        step = len(session.prefix)
        noise = 0.0
        if self._distractor is not None and self._distractor.applies_at(step):
            noise = self._distractor.mass
        scale = (1 - noise) / node.weight
        candidates = [
            TokenCandidate(token, token, child.weight * scale)
            for token, child in node.children.items()
        ]
        if node.end_weight > 0:
            candidates.append(
                TokenCandidate(EOS_TOKEN_ID, "", node.end_weight * scale)
            )
        if noise > 0:
            assert self._distractor is not None
            candidates.append(
                TokenCandidate(
                    self._distractor.surface, self._distractor.surface, noise
                )
            )
        candidates.sort(key=lambda c: (-c.prob, c.token_id))
        return candidates[:k]

    def decode(self, tokens: Sequence[str]) -> str:
        for token in tokens:
            if token not in self._vocabulary:
                raise UnknownToken(repr(token))
        return "".join(token for token in tokens if token != EOS_TOKEN_ID)


class ScriptedRouter:
    """Routes task texts to scripted models by substring match."""

    def __init__(
        self,
        routes: Sequence[tuple[str, ScriptedModel]],
        default: ScriptedModel | None = None,
    ) -> None:
        self._routes = list(routes)
        self._default = default

    def _model_for(self, task_text: str) -> ScriptedModel:
        for key, model in self._routes:
            if key in task_text:
                return model
        if self._default is not None:
            return self._default
        raise AdapterUnavailable("no scripted route matches the task text")

    def start_session(self, task_text: str) -> GenerationSession:
        return self._model_for(task_text).start_session(task_text)

    def top_candidates(
        self, session: GenerationSession, k: int
    ) -> list[TokenCandidate]:
        return self._model_for(session.task_text).top_candidates(session, k)

    def decode(self, tokens: Sequence[str]) -> str:
        return "".join(token for token in tokens if token != EOS_TOKEN_ID)


def _model_from_mapping(data: Mapping) -> ScriptedModel:
    paths: list[tuple[tuple[str, ...], float]] = []
    for entry in data.get("paths", []):
        weight = float(entry.get("weight", 1.0))
        if "tokens" in entry:
            paths.append((tuple(entry["tokens"]), weight))
        elif "query" in entry:
            paths.append((lexeme_tokens(entry["query"]), weight))
        else:
            raise ProtocolError("scripted path needs a 'query' or 'tokens' field")
    distractor = None
    if "distractor" in data:
        spec = data["distractor"]
        steps = spec.get("steps")
        distractor = DistractorSpec(
            surface=spec["surface"],
            mass=float(spec["mass"]),
            steps=frozenset(steps) if steps is not None else None,
        )
    return ScriptedModel(paths, distractor)


def load_scripted_model(path: Path | str) -> ScriptedModel | ScriptedRouter:
    """Load a scripted model spec file.

    The file holds either a single model (``{"paths": [...]}``) or a
    router (``{"routes": [{"match": ..., "paths": [...]}, ...]}``).
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"cannot read scripted model spec: {exc}") from exc
    if "routes" in data:
        routes = [
            (entry.get("match", ""), _model_from_mapping(entry))
            for entry in data["routes"]
        ]
        default = (
            _model_from_mapping(data["default"]) if "default" in data else None
        )
        return ScriptedRouter(routes, default)
    return _model_from_mapping(data)


# -- HTTP completion client -------------------------------------------------


class HttpCompletionModel:
    """Client for a JSON-over-HTTP completion server.

    Request: ``{"task": str, "prefix": str, "k": int}``.  Response:
    ``{"candidates": [{"text": str, "logprob": float}], "eos_logprob":
    float|null}``.  Probabilities are exp(logprob), used raw.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 10.0,
        auth_token: str | None = None,
        session: requests.Session | None = None,
    ) -> None:
        self._endpoint = endpoint
        self._timeout = timeout
        self._http = session or requests.Session()
        if auth_token:
            self._http.headers["Authorization"] = f"Bearer {auth_token}"
        self._reachable = False

    def start_session(self, task_text: str) -> GenerationSession:
        if not self._reachable:
            try:
                self._http.head(self._endpoint, timeout=self._timeout)
            except requests.RequestException as exc:
                raise AdapterUnavailable(str(exc)) from exc
            self._reachable = True
        return GenerationSession(task_text)

    def top_candidates(
        self, session: GenerationSession, k: int
    ) -> list[TokenCandidate]:
        payload = {
            "task": session.task_text,
            "prefix": self.decode(session.prefix),
            "k": k,
        }
        try:
            response = self._http.post(
                self._endpoint, json=payload, timeout=self._timeout
            )
        except requests.RequestException as exc:
            raise AdapterUnavailable(str(exc)) from exc
        if response.status_code != 200:
            raise ProtocolError(f"server returned HTTP {response.status_code}")
        try:
            body = response.json()
            raw = body["candidates"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed server reply: {exc}") from exc
        candidates = []
        for entry in raw:
            try:
                text = entry["text"]
                prob = math.exp(float(entry["logprob"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"malformed candidate: {exc}") from exc
            if not isinstance(text, str) or not 0 < prob <= 1:
                raise ProtocolError(f"candidate out of range: {entry!r}")
            candidates.append(TokenCandidate(text, text, prob))
        eos_logprob = body.get("eos_logprob")
        if eos_logprob is not None:
            prob = math.exp(float(eos_logprob))
            if not 0 < prob <= 1:
                raise ProtocolError("eos probability out of range")
            candidates.append(TokenCandidate(EOS_TOKEN_ID, "", prob))
        candidates.sort(key=lambda c: (-c.prob, c.token_id))
        return candidates[:k]

    def decode(self, tokens: Sequence[str]) -> str:
        for token in tokens:
            if not isinstance(token, str):
                raise UnknownToken(repr(token))
        return "".join(token for token in tokens if token != EOS_TOKEN_ID)
