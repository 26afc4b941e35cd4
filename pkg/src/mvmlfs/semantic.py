"""Semantic relevance scoring of description texts via an LLM agent.

A scoring agent is asked, for batches of described objects, to judge the
semantic relevance of (feature, label), (view, label) and (label, label)
pairs on a [0, 1] scale.  Two agents are provided:

* :class:`HttpChatScorer` talks to a chat-completion HTTP endpoint
  (OpenAI-style payload), with retries, a one-shot stricter re-prompt on
  malformed output, and per-pair re-queries for pairs the model skipped.
* :class:`MockScorer` is a deterministic offline stand-in that scores by
  Jaccard overlap of synonym-canonicalized token sets, so the whole
  pipeline can run and be tested without network access.

All scores are clamped into [0, 1] and written through an append-only
cache so each pair is paid for at most once.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BatchTooLarge, MalformedResponse, MissingPairInResponse, TransportError

ROLE_TEXT = (
    "You are a data scientist working on multi-view multi-label feature "
    "selection. Your goal is dedicated to exploring the impact of semantic "
    "relationships among features, labels, and views on feature selection "
    "results."
)

PAIR_KINDS = ("feature-label", "view-label", "label-label")

_TASK_TEXTS = {
    "feature-label": (
        "For every listed feature and every listed label, identify semantically "
        "relevant or redundant features and assign a semantic score in the "
        "range [0, 1] expressing how relevant the feature is to the label."
    ),
    "view-label": (
        "For every listed view and every listed label, assign a semantic score "
        "in the range [0, 1] expressing how relevant the view as a whole is to "
        "the label."
    ),
    "label-label": (
        "For every unordered pair of distinct listed labels, assign a semantic "
        "score in the range [0, 1] expressing how semantically similar the two "
        "labels are."
    ),
}

_PAIR_KEYS = {
    "feature-label": ("feature", "label"),
    "view-label": ("view", "label"),
    "label-label": ("label_a", "label_b"),
}

_STRICT_REMINDER = (
    "\n\nYour previous answer could not be parsed. Respond with ONLY a JSON "
    "array of objects as specified, with integer indices and numeric scores. "
    "No prose, no code fences."
)

DEFAULT_MAX_BATCH = 20


@dataclass
class PromptSpec:
    """One scoring request: a batch of pairs of one kind, plus context."""

    pair_kind: str
    label_entries: list[tuple[int, str]]
    feature_entries: list[tuple[int, str]] = field(default_factory=list)
    view_entries: list[tuple[int, str, str]] = field(default_factory=list)  # (id, name, text)
    role_text: str = ROLE_TEXT
    task_text: str = ""
    max_batch: int = DEFAULT_MAX_BATCH

    def __post_init__(self):
        if self.pair_kind not in PAIR_KINDS:
            raise ValueError(f"unknown pair_kind {self.pair_kind!r}")
        if not self.task_text:
            self.task_text = _TASK_TEXTS[self.pair_kind]

    def requested_pairs(self) -> list[tuple[int, int, str, str]]:
        """(id_a, id_b, text_a, text_b) for every pair this spec asks about."""
        if self.pair_kind == "feature-label":
            return [
                (fid, lid, ftext, ltext)
                for fid, ftext in self.feature_entries
                for lid, ltext in self.label_entries
            ]
        if self.pair_kind == "view-label":
            return [
                (vid, lid, vtext, ltext)
                for vid, _, vtext in self.view_entries
                for lid, ltext in self.label_entries
            ]
        pairs = []
        for a, (ida, ta) in enumerate(self.label_entries):
            for idb, tb in self.label_entries[a + 1:]:
                pairs.append((ida, idb, ta, tb))
        return pairs


def build_prompt(spec: PromptSpec) -> str:
    """Render a deterministic prompt: role, views, features, labels, task.

    The closing instruction demands a pure-JSON list of scored pairs keyed
    by 1-based indices into the listed order, which keeps parsing immune to
    duplicate or exotic description texts.
    """
    if spec.pair_kind == "feature-label" and len(spec.feature_entries) > spec.max_batch:
        raise BatchTooLarge(
            f"{len(spec.feature_entries)} features in one prompt (max {spec.max_batch})"
        )
    lines = [spec.role_text, ""]
    if spec.view_entries:
        lines.append("Views:")
        for i, (_, name, text) in enumerate(spec.view_entries, start=1):
            lines.append(f"{i}. {name}: {text}" if text and text != name else f"{i}. {name}")
        lines.append("")
    if spec.feature_entries:
        lines.append("Features:")
        for i, (_, text) in enumerate(spec.feature_entries, start=1):
            lines.append(f"{i}. {text}")
        lines.append("")
    lines.append("Labels:")
    for i, (_, text) in enumerate(spec.label_entries, start=1):
        lines.append(f"{i}. {text}")
    lines.append("")
    lines.append(f"Task: {spec.task_text}")
    key_a, key_b = _PAIR_KEYS[spec.pair_kind]
    lines.append(
        "Respond with only a JSON array of objects, one per pair, of the form "
        f'[{{"{key_a}": 1, "{key_b}": 2, "score": 0.8}}, ...] where "{key_a}" and '
        f'"{key_b}" are 1-based indices into the lists above and "score" is a '
        "number in [0, 1]. Cover every pair. No other text."
    )
    return "\n".join(lines)


# --- deterministic offline scorer ---

_TOKEN = re.compile(r"[a-z0-9]+")


def _token_set(text: str, synonyms: dict[str, str] | None = None) -> set[str]:
    tokens = set(_TOKEN.findall(text.lower()))
    if synonyms:
        tokens = {synonyms.get(t, t) for t in tokens}
    return tokens


def mock_score(text_a: str, text_b: str, synonyms: dict[str, str] | None = None) -> float:
    """Jaccard similarity of token sets after synonym canonicalization."""
    ta = _token_set(text_a, synonyms)
    tb = _token_set(text_b, synonyms)
    union = ta | tb
    if not union:
        return 0.0
    return len(ta & tb) / len(union)


class MockScorer:
    """Offline deterministic scoring agent (token-set Jaccard)."""

    def __init__(self, synonyms: dict[str, str] | None = None, model: str = "mock-jaccard"):
        self.synonyms = dict(synonyms or {})
        self.model = model

    def score_pair(self, text_a: str, text_b: str) -> float:
        return mock_score(text_a, text_b, self.synonyms)


# --- HTTP chat-completion scorer ---


class HttpChatScorer:
    """Chat-completion client with exponential-backoff retries.

    The credential is taken from the environment (`api_key_env`), never
    from command-line flags.  `transport` may be swapped for a callable
    (payload -> response dict) in tests; the default lazily imports
    `requests` so offline code paths never touch networking machinery.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "MVMLFS_API_KEY",
        temperature: float = 0.0,
        max_retries: int = 3,
        backoff_seconds: float = 1.0,
        timeout: float = 120.0,
        transport=None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self.timeout = timeout
        self._transport = transport or self._http_transport

    def _http_transport(self, payload: dict) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
            resp.raise_for_status()
            return resp.json()
        except Exception as exc:  # connection, HTTP status, JSON body
            raise TransportError(str(exc)) from exc

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = self._transport(payload)
                return response["choices"][0]["message"]["content"]
            except TransportError as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff_seconds * 2**attempt)
            except (KeyError, IndexError, TypeError) as exc:
                raise MalformedResponse(f"unexpected response envelope: {exc}") from exc
        raise TransportError(f"giving up after {self.max_retries} attempts: {last_error}")


# --- score set and cache ---


@dataclass
class SemanticScoreSet:
    """LLM-derived pairwise scores in [0, 1], plus provenance per entry."""

    fl: dict[tuple[int, int], float] = field(default_factory=dict)
    vlw: dict[tuple[int, int], float] = field(default_factory=dict)
    ll: dict[tuple[int, int], float] = field(default_factory=dict)
    provenance: dict[tuple[str, int, int], tuple[str, str]] = field(default_factory=dict)

    def add(self, kind: str, id_a: int, id_b: int, score: float, model: str, digest: str):
        if kind == "feature-label":
            self.fl[(id_a, id_b)] = score
        elif kind == "view-label":
            self.vlw[(id_a, id_b)] = score
        elif kind == "label-label":
            id_a, id_b = min(id_a, id_b), max(id_a, id_b)
            self.ll[(id_a, id_b)] = score
        else:
            raise ValueError(f"unknown pair kind {kind!r}")
        self.provenance[(kind, id_a, id_b)] = (model, digest)

    def merge(self, other: "SemanticScoreSet") -> None:
        self.fl.update(other.fl)
        self.vlw.update(other.vlw)
        self.ll.update(other.ll)
        self.provenance.update(other.provenance)


def pair_key(model: str, pair_kind: str, text_a: str, text_b: str) -> str:
    """Stable cache key for one scored pair under one model."""
    blob = json.dumps([model, pair_kind, text_a, text_b], ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ScoreCache:
    """Append-only newline-delimited JSON score cache.

    Each record is `{"key", "score", "model", "timestamp"}` on its own
    line.  Writes are single whole-line appends, so concurrent processes
    adding disjoint keys do not corrupt each other.  Corrupt lines are
    skipped with a warning.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._scores: dict[str, float] = {}
        if self.path.is_file():
            self._load()

    def _load(self) -> None:
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    self._scores[rec["key"]] = float(rec["score"])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    warnings.warn(f"{self.path}:{lineno}: corrupt cache entry skipped")

    def __len__(self) -> int:
        return len(self._scores)

    def get(self, key: str) -> float | None:
        return self._scores.get(key)

    def put(self, key: str, score: float, model: str) -> None:
        self._scores[key] = score
        record = json.dumps(
            {"key": key, "score": score, "model": model, "timestamp": time.time()}
        )
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(record + "\n")
            fh.flush()


def _clamp(score: float, context: str) -> float:
    if not 0.0 <= score <= 1.0:
        warnings.warn(f"score {score} outside [0, 1] clamped ({context})")
        return min(max(score, 0.0), 1.0)
    return float(score)


def _parse_response(text: str, spec: PromptSpec) -> dict[tuple[int, int], float]:
    """Extract {(id_a, id_b): score} from a model response.

    Accepts a bare JSON array or an array embedded in surrounding prose /
    code fences; anything else is MalformedResponse.
    """
    key_a, key_b = _PAIR_KEYS[spec.pair_kind]
    if spec.pair_kind == "feature-label":
        ids_a = [fid for fid, _ in spec.feature_entries]
    elif spec.pair_kind == "view-label":
        ids_a = [vid for vid, _, _ in spec.view_entries]
    else:
        ids_a = [lid for lid, _ in spec.label_entries]
    ids_b = [lid for lid, _ in spec.label_entries]

    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        match = re.search(r"\[.*\]", text, re.DOTALL)
        if match is None:
            raise MalformedResponse("no JSON array in response") from None
        try:
            data = json.loads(match.group(0))
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"unparseable JSON array: {exc}") from None
    if not isinstance(data, list):
        raise MalformedResponse(f"expected a JSON array, got {type(data).__name__}")

    out: dict[tuple[int, int], float] = {}
    for entry in data:
        if not isinstance(entry, dict):
            raise MalformedResponse("array entries must be objects")
        try:
            ia = int(entry[key_a])
            ib = int(entry[key_b])
            score = float(entry["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"bad entry {entry!r}: {exc}") from None
        if not (1 <= ia <= len(ids_a) and 1 <= ib <= len(ids_b)):
            raise MalformedResponse(f"index out of range in entry {entry!r}")
        out[(ids_a[ia - 1], ids_b[ib - 1])] = score
    return out


def _singleton_spec(spec: PromptSpec, id_a: int, id_b: int) -> PromptSpec:
    labels = [e for e in spec.label_entries if e[0] == id_b]
    if spec.pair_kind == "feature-label":
        return PromptSpec(
            pair_kind=spec.pair_kind,
            label_entries=labels,
            feature_entries=[e for e in spec.feature_entries if e[0] == id_a],
            view_entries=spec.view_entries,
            role_text=spec.role_text,
            max_batch=spec.max_batch,
        )
    if spec.pair_kind == "view-label":
        return PromptSpec(
            pair_kind=spec.pair_kind,
            label_entries=labels,
            view_entries=[e for e in spec.view_entries if e[0] == id_a],
            role_text=spec.role_text,
            max_batch=spec.max_batch,
        )
    pair = [e for e in spec.label_entries if e[0] in (id_a, id_b)]
    return PromptSpec(
        pair_kind=spec.pair_kind,
        label_entries=pair,
        role_text=spec.role_text,
        max_batch=spec.max_batch,
    )


def _query_batch(agent, spec: PromptSpec) -> tuple[dict[tuple[int, int], float], str]:
    """One prompt round-trip with a single stricter retry on parse failure."""
    prompt = build_prompt(spec)
    digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
    text = agent.complete(prompt)
    try:
        return _parse_response(text, spec), digest
    except MalformedResponse:
        text = agent.complete(prompt + _STRICT_REMINDER)
        return _parse_response(text, spec), digest


def score_pairs(agent, spec: PromptSpec, cache: ScoreCache | None = None) -> SemanticScoreSet:
    """Score every pair a PromptSpec requests, going through the cache.

    Pairs already cached never reach the agent.  With a local agent
    (anything exposing `score_pair`) the remaining pairs are scored
    directly; with a chat agent one batched prompt is sent, skipped pairs
    are re-queried individually, and pairs still missing after that raise
    MissingPairInResponse.
    """
    result = SemanticScoreSet()
    model = getattr(agent, "model", "unknown")
    pending: list[tuple[int, int, str, str]] = []
    for id_a, id_b, text_a, text_b in spec.requested_pairs():
        key = pair_key(model, spec.pair_kind, text_a, text_b)
        hit = cache.get(key) if cache is not None else None
        if hit is not None:
            result.add(spec.pair_kind, id_a, id_b, hit, model, "cache")
        else:
            pending.append((id_a, id_b, text_a, text_b))
    if not pending:
        return result

    if hasattr(agent, "score_pair"):
        for id_a, id_b, text_a, text_b in pending:
            score = _clamp(agent.score_pair(text_a, text_b), f"{spec.pair_kind} {id_a}-{id_b}")
            if cache is not None:
                cache.put(pair_key(model, spec.pair_kind, text_a, text_b), score, model)
            result.add(spec.pair_kind, id_a, id_b, score, model, "local")
        return result

    scored, digest = _query_batch(agent, spec)
    for id_a, id_b, text_a, text_b in pending:
        if (id_a, id_b) not in scored:
            retry, _ = _query_batch(agent, _singleton_spec(spec, id_a, id_b))
            if (id_a, id_b) not in retry:
                raise MissingPairInResponse(
                    f"{spec.pair_kind} pair ({id_a}, {id_b}) absent after re-query"
                )
            scored[(id_a, id_b)] = retry[(id_a, id_b)]
        score = _clamp(scored[(id_a, id_b)], f"{spec.pair_kind} {id_a}-{id_b}")
        if cache is not None:
            cache.put(pair_key(model, spec.pair_kind, text_a, text_b), score, model)
        result.add(spec.pair_kind, id_a, id_b, score, model, digest)
    return result


def score_dataset(
    dataset,
    catalog,
    agent,
    cache: ScoreCache | None = None,
    batch_size: int = DEFAULT_MAX_BATCH,
) -> SemanticScoreSet:
    """Score all feature-label, view-label and label-label pairs of a dataset.

    Features are batched per view (at most `batch_size` per prompt, each
    batch scored against the full label list); view-label and label-label
    pairs fit in one prompt each.
    """
    labels = list(enumerate(catalog.label_texts))
    views = [
        (v.view_id, v.name, catalog.view_texts[v.view_id]) for v in dataset.views
    ]
    result = SemanticScoreSet()
    for view in dataset.views:
        texts = catalog.feature_texts[view.view_id]
        for start in range(0, view.width, batch_size):
            chunk = [
                (dataset.global_id(view.view_id, local), texts[local])
                for local in range(start, min(start + batch_size, view.width))
            ]
            spec = PromptSpec(
                pair_kind="feature-label",
                label_entries=labels,
                feature_entries=chunk,
                view_entries=[views[view.view_id]],
                max_batch=batch_size,
            )
            result.merge(score_pairs(agent, spec, cache))
    result.merge(
        score_pairs(
            agent,
            PromptSpec(pair_kind="view-label", label_entries=labels, view_entries=views),
            cache,
        )
    )
    if len(labels) > 1:
        result.merge(
            score_pairs(agent, PromptSpec(pair_kind="label-label", label_entries=labels), cache)
        )
    return result
