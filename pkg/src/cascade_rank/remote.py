"""HTTP client for external neural scorer services.

Wire contract: POST {base_url}/v1/score with a compact JSON body
  {"query_id": ..., "query_text": ..., "mode": "mono" | "duo",
   "items": [{"doc_id", "text"}, ...]                       (mono)
            [{"i_doc_id", "i_text", "j_doc_id", "j_text"}, ...]  (duo)}
returning {"scores": [...]} aligned index-for-index with the items, and
GET {base_url}/v1/health returning a descriptor such as
  {"modes": ["mono", "duo"], "token_budget": 512}.

The client chunks items into batches, optionally keeps several batches in
flight, and reassembles strictly by batch index so ordering never depends
on arrival order.  A service that declares a token_budget does its own
truncation, and the pipeline skips local truncation for it.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import requests

from .corpus import Query
from .errors import ProtocolError


@dataclass(frozen=True)
class ScorerEndpoint:
    base_url: str
    timeout_ms: int = 30_000
    max_batch: int = 64
    retries: int = 2
    concurrency: int = 1

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")

    @property
    def score_url(self) -> str:
        return self.base_url.rstrip("/") + "/v1/score"

    @property
    def health_url(self) -> str:
        return self.base_url.rstrip("/") + "/v1/health"


def validate_scores(payload: object, expected: int, offset: int = 0) -> list[float]:
    """Check a /v1/score response body against the contract.

    Rejects missing/misshapen bodies, length mismatches, and any score
    that is non-finite or outside [0, 1], naming the absolute item index.
    """
    if not isinstance(payload, dict) or "scores" not in payload:
        raise ProtocolError("response body has no 'scores' field")
    scores = payload["scores"]
    if not isinstance(scores, list):
        raise ProtocolError("'scores' is not a list")
    if len(scores) != expected:
        raise ProtocolError(
            f"service returned {len(scores)} scores for {expected} items"
        )
    out: list[float] = []
    for i, s in enumerate(scores):
        if not isinstance(s, (int, float)) or isinstance(s, bool):
            raise ProtocolError(f"score at index {offset + i} is not a number: {s!r}")
        s = float(s)
        if not math.isfinite(s) or not 0.0 <= s <= 1.0:
            raise ProtocolError(f"score at index {offset + i} outside [0, 1]: {s}")
        out.append(s)
    return out


def health_check(endpoint: ScorerEndpoint) -> dict:
    """Fetch the service descriptor; raises ProtocolError if unreachable
    or malformed."""
    try:
        resp = requests.get(endpoint.health_url, timeout=endpoint.timeout_ms / 1000.0)
    except requests.RequestException as exc:
        raise ProtocolError(f"health check failed: {exc}") from exc
    if resp.status_code != 200:
        raise ProtocolError(f"health check returned HTTP {resp.status_code}")
    try:
        descriptor = resp.json()
    except ValueError as exc:
        raise ProtocolError("health check returned non-JSON body") from exc
    modes = descriptor.get("modes")
    if not isinstance(modes, list) or not all(isinstance(m, str) for m in modes):
        raise ProtocolError("health descriptor has no valid 'modes' list")
    return descriptor


class _RemoteScorerBase:
    mode: str = ""

    def __init__(self, endpoint: ScorerEndpoint, descriptor: dict | None = None):
        self.endpoint = endpoint
        if descriptor is None:
            descriptor = health_check(endpoint)
        if self.mode not in descriptor.get("modes", []):
            raise ProtocolError(
                f"service at {endpoint.base_url} does not support mode {self.mode!r}"
            )
        # Truncation is delegated to services that declare their own budget.
        self.handles_truncation = descriptor.get("token_budget") is not None

    def _post_batch(self, body: bytes) -> dict:
        last_exc: Exception | None = None
        for _ in range(self.endpoint.retries + 1):
            try:
                resp = requests.post(
                    self.endpoint.score_url,
                    data=body,
                    headers={"Content-Type": "application/json"},
                    timeout=self.endpoint.timeout_ms / 1000.0,
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"score request returned HTTP {resp.status_code}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError("score response is not JSON") from exc
        raise ProtocolError(
            f"score request failed after {self.endpoint.retries + 1} attempts: {last_exc}"
        )

    def _score_items(self, query: Query, items: list[dict]) -> list[float]:
        size = self.endpoint.max_batch
        batches = [items[i : i + size] for i in range(0, len(items), size)]

        def score_one(batch_index: int) -> list[float]:
            batch = batches[batch_index]
            body = json.dumps(
                {
                    "query_id": query.query_id,
                    "query_text": query.text,
                    "mode": self.mode,
                    "items": batch,
                },
                separators=(",", ":"),
                ensure_ascii=False,
            ).encode("utf-8")
            payload = self._post_batch(body)
            return validate_scores(payload, len(batch), offset=batch_index * size)

        if self.endpoint.concurrency <= 1 or len(batches) <= 1:
            chunks = [score_one(i) for i in range(len(batches))]
        else:
            with ThreadPoolExecutor(max_workers=self.endpoint.concurrency) as pool:
                chunks = list(pool.map(score_one, range(len(batches))))
        return [s for chunk in chunks for s in chunk]


class RemotePointwiseScorer(_RemoteScorerBase):
    """PointwiseScorer backed by the wire protocol."""

    mode = "mono"

    def score_batch(
        self, query: Query, items: Sequence[tuple[str, str]]
    ) -> list[float]:
        payload = [{"doc_id": doc_id, "text": text} for doc_id, text in items]
        return self._score_items(query, payload)


class RemotePairwiseScorer(_RemoteScorerBase):
    """PairwiseScorer backed by the wire protocol."""

    mode = "duo"

    def score_pairs(
        self, query: Query, pairs: Sequence[tuple[str, str, str, str]]
    ) -> list[float]:
        payload = [
            {"i_doc_id": i_id, "i_text": i_text, "j_doc_id": j_id, "j_text": j_text}
            for i_id, i_text, j_id, j_text in pairs
        ]
        return self._score_items(query, payload)


def score_remote_mono(
    endpoint: ScorerEndpoint, query: Query, candidates: Sequence[tuple[str, str]]
) -> list[float]:
    """One-shot pointwise scoring against a remote service."""
    return RemotePointwiseScorer(endpoint).score_batch(query, candidates)


def score_remote_duo(
    endpoint: ScorerEndpoint, query: Query, pairs: Sequence[tuple[str, str, str, str]]
) -> list[float]:
    """One-shot pairwise scoring against a remote service."""
    return RemotePairwiseScorer(endpoint).score_pairs(query, pairs)
