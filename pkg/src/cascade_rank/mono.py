"""Second-stage pointwise re-ranking.

Each surviving candidate is scored independently against the query by a
pointwise scorer (anything with ``score_batch``), and the top-k1 are kept.
Also houses the cross-entropy training loss and a small trainable
logistic scorer that exercises it end to end.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import DocumentStore, Qrels, Query
from .errors import ArtifactFormatError
from .features import N_FEATURES, FeatureMap
from .lexical import Candidate, RankedList, _TOKEN_RE

# Scorer-input budget: query capped at 64 tokens, query + candidate +
# 3 reserved positions (classification marker, two separators) <= 512.
MAX_QUERY_TOKENS = 64
MAX_TOTAL_TOKENS = 512
RESERVED_TOKENS = 3

# Loss clamp: the qrels oracle emits exact 0/1 scores, which must not
# produce an infinite loss.
PROB_CLAMP = 1e-7

MODEL_MAGIC = "cascade-rank-toy-model"
MODEL_VERSION = 1


class PointwiseScorer(Protocol):
    """Scores candidates independently; returns one probability per item."""

    def score_batch(
        self, query: Query, items: Sequence[tuple[str, str]]
    ) -> list[float]:
        """items are (doc_id, text) pairs; output aligns index-for-index,
        every value in [0, 1]."""
        ...


def truncate_mono(
    query_tokens: list[str], doc_tokens: list[str]
) -> tuple[list[str], list[str]]:
    """Tail-truncate so the query fits 64 tokens and the pair fits the
    512-token budget after reserved positions."""
    q = query_tokens[:MAX_QUERY_TOKENS]
    doc_budget = MAX_TOTAL_TOKENS - RESERVED_TOKENS - len(q)
    return q, doc_tokens[:doc_budget]


def truncate_text(text: str, max_tokens: int) -> str:
    """Cut original text after its max_tokens-th token.

    Keeps the raw string (casing, punctuation) up to the cut so scorers
    still see unnormalized input.
    """
    if max_tokens <= 0:
        return ""
    for i, match in enumerate(_TOKEN_RE.finditer(text)):
        if i == max_tokens - 1:
            return text[: match.end()]
    return text


def rerank_mono(
    scorer: PointwiseScorer,
    query: Query,
    r0: RankedList,
    k1: int,
    store: DocumentStore,
    truncate: bool = True,
) -> RankedList:
    """Score every candidate in r0 and keep the top k1.

    Ties break by upstream rank, so a degenerate constant scorer preserves
    the incoming order.  Set truncate=False when the scorer declares its
    own token budget (remote services own their subword vocabulary).
    """
    if not r0.entries:
        return RankedList(query.query_id, [], "H1")
    query_text = query.text
    doc_budget = MAX_TOTAL_TOKENS
    if truncate:
        query_text = truncate_text(query_text, MAX_QUERY_TOKENS)
        n_query = len(_TOKEN_RE.findall(query_text))
        doc_budget = MAX_TOTAL_TOKENS - RESERVED_TOKENS - n_query
    items: list[tuple[str, str]] = []
    for cand in r0.entries:
        text = store.get(cand.doc_id).text
        if truncate:
            text = truncate_text(text, doc_budget)
        items.append((cand.doc_id, text))
    scores = scorer.score_batch(Query(query.query_id, query_text), items)
    if len(scores) != len(items):
        raise ValueError(
            f"scorer returned {len(scores)} scores for {len(items)} items"
        )
    order = sorted(
        range(len(items)), key=lambda i: (-scores[i], i)
    )  # i is the upstream rank
    kept = order[: max(k1, 0)]
    entries = [Candidate(r0.entries[i].doc_id, float(scores[i])) for i in kept]
    return RankedList(query.query_id, entries, "H1")


class OraclePointwiseScorer:
    """Scores 1 for judged-relevant docs, 0 otherwise; for ceiling analyses
    and cost accounting without a trained model."""

    def __init__(self, qrels: Qrels):
        self.qrels = qrels

    def score_batch(
        self, query: Query, items: Sequence[tuple[str, str]]
    ) -> list[float]:
        return [
            1.0 if self.qrels.is_relevant(query.query_id, doc_id) else 0.0
            for doc_id, _ in items
        ]


def pointwise_loss(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Cross-entropy over positives and negatives:
    -sum(log s | label 1) - sum(log(1 - s) | label 0).

    Scores are clamped away from exact 0/1 so the loss stays finite.
    """
    if len(scores) != len(labels):
        raise ValueError("scores and labels must have equal length")
    total = 0.0
    for s, y in zip(scores, labels):
        s = min(max(s, PROB_CLAMP), 1.0 - PROB_CLAMP)
        total -= np.log(s) if y == 1 else np.log(1.0 - s)
    return float(total)


def logistic(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-z))


def logistic_loss_and_grad(
    weights: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Cross-entropy loss and its analytic weight gradient for
    p = logistic(x @ w).  x is (n, d), y in {0, 1}^n; the loss is summed,
    not averaged, matching pointwise_loss."""
    p = logistic(x @ weights)
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum())
    grad = x.T @ (p - y)
    return loss, grad


@dataclass
class TrainingBatch:
    """One balanced batch: examples plus positive/negative index sets."""

    examples: list[tuple[str, str, int]]
    j_pos: list[int]
    j_neg: list[int]


def build_balanced_batch(
    examples: Sequence[tuple[str, str, int]],
    pos_indices: Sequence[int],
    neg_indices: Sequence[int],
    batch_size: int,
    rng: random.Random,
) -> tuple[TrainingBatch, list[int]]:
    """Sample an equal number of positives and negatives (with replacement).

    Also returns the source rows so callers can reuse precomputed
    per-example features.
    """
    half = max(batch_size // 2, 1)
    rows = [pos_indices[rng.randrange(len(pos_indices))] for _ in range(half)]
    rows += [neg_indices[rng.randrange(len(neg_indices))] for _ in range(half)]
    batch = TrainingBatch(
        [examples[i] for i in rows], list(range(half)), list(range(half, 2 * half))
    )
    return batch, rows


@dataclass
class TrainConfig:
    lr: float = 0.1
    iterations: int = 200
    batch_size: int = 16
    seed: int = 0


class ToyPointwiseModel:
    """Logistic scorer over the 4-feature lexical map.

    Features are standardized with statistics frozen at training time
    (bias slot excluded), so a saved model reproduces its scores exactly.
    """

    kind = "pointwise"

    def __init__(self, feature_map: FeatureMap, weights: np.ndarray | None = None):
        self.feature_map = feature_map
        self.weights = (
            np.zeros(N_FEATURES) if weights is None else np.asarray(weights, float)
        )
        self.means = np.zeros(N_FEATURES)
        self.stds = np.ones(N_FEATURES)

    def set_standardization(self, means: np.ndarray, stds: np.ndarray) -> None:
        means = np.asarray(means, float).copy()
        stds = np.asarray(stds, float).copy()
        stds[stds == 0.0] = 1.0
        # Bias stays raw; standardizing a constant would zero it out.
        means[-1], stds[-1] = 0.0, 1.0
        self.means, self.stds = means, stds

    def phi(self, query_text: str, doc_text: str) -> np.ndarray:
        raw = self.feature_map.features(query_text, doc_text)
        return (raw - self.means) / self.stds

    def score(self, query_text: str, doc_text: str) -> float:
        return float(logistic(self.phi(query_text, doc_text) @ self.weights))

    def score_batch(
        self, query: Query, items: Sequence[tuple[str, str]]
    ) -> list[float]:
        return [self.score(query.text, text) for _, text in items]

    def save(self, path: str | Path) -> None:
        payload = {
            "magic": MODEL_MAGIC,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "feature_map": self.feature_map.to_dict(),
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f)
            f.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "ToyPointwiseModel":
        payload = _load_model_payload(path, expected_kind=cls.kind)
        model = cls(FeatureMap.from_dict(payload["feature_map"]),
                    np.array(payload["weights"], float))
        model.means = np.array(payload["means"], float)
        model.stds = np.array(payload["stds"], float)
        return model


def _load_model_payload(path: str | Path, expected_kind: str) -> dict:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("magic") != MODEL_MAGIC:
        raise ArtifactFormatError(f"{path}: not a toy model file")
    if payload.get("version") != MODEL_VERSION:
        raise ArtifactFormatError(
            f"{path}: unsupported model version {payload.get('version')!r}"
        )
    if payload.get("kind") != expected_kind:
        raise ArtifactFormatError(
            f"{path}: model kind {payload.get('kind')!r}, expected {expected_kind!r}"
        )
    return payload


def train_toy_pointwise(
    model: ToyPointwiseModel,
    data: Sequence[tuple[str, str, int]],
    config: TrainConfig,
) -> ToyPointwiseModel:
    """SGD on the cross-entropy loss over balanced batches.

    data rows are (query_text, doc_text, label); both label classes must
    be present or balanced batches cannot be built.
    """
    if config.iterations == 0:
        return model
    data = list(data)
    pos = [i for i, (_, _, y) in enumerate(data) if y == 1]
    neg = [i for i, (_, _, y) in enumerate(data) if y == 0]
    if not pos or not neg:
        raise ValueError("training data must contain both labels")

    raw = np.stack([model.feature_map.features(q, d) for q, d, _ in data])
    model.set_standardization(raw.mean(axis=0), raw.std(axis=0))
    x = (raw - model.means) / model.stds
    y = np.array([label for _, _, label in data], dtype=float)

    rng = random.Random(config.seed)
    for _ in range(config.iterations):
        _, rows = build_balanced_batch(data, pos, neg, config.batch_size, rng)
        _, grad = logistic_loss_and_grad(model.weights, x[rows], y[rows])
        model.weights = model.weights - config.lr * grad
    return model
